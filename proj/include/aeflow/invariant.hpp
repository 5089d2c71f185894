#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aeflow/bank.hpp"
#include "aeflow/coeff.hpp"
#include "aeflow/flow.hpp"

namespace aeflow {

/// Axis-aligned box with a uniform bin (or lattice) resolution.
struct Box {
  std::vector<double> lower, upper;
  int dim() const { return static_cast<int>(lower.size()); }
  double volume() const;
};

struct HistogramSpec {
  Box box;
  double bin_width = 0.25;
};

enum class DensityConstant { empirical, certified };

struct KrylovOptions {
  double dt = 1e-2;
  /// Window [burn_in, n) for each horizon n; horizons strictly increasing, > burn_in.
  std::vector<double> horizons;
  double burn_in = 0.0;
  /// Initial points per axis on the gamma_0 box (cell-centred lattice).
  std::int64_t per_axis = 1000;
  /// Each particle gets its own Brownian path derived from (seed, particle). With false
  /// all particles of a seed share one path.
  bool independent_paths = true;
  /// Snapshot spacing of the common-noise lattice run that estimates K_hat.
  double compression_every = 0.25;
  DensityConstant density_constant = DensityConstant::empirical;
  double binning_tolerance = 0.15;
  double max_escaped_mass = 0.10;
  FlowOptions flow;
};

/// Time-and-seed averaged occupation measure mu_n = (1/n) int_0^n E delta_{Y_s} ds, as
/// exact sample counts per histogram bin (left-point samples, every step).
struct OccupationMeasure {
  double horizon = 0.0, burn_in = 0.0, dt = 0.0;
  HistogramSpec histogram;
  std::vector<std::int64_t> bins_per_axis;
  std::vector<std::uint64_t> counts;                 // per bin
  std::vector<std::vector<std::uint64_t>> seed_counts;  // per seed, per bin
  std::uint64_t samples = 0;          // all particle-time samples (per seed: samples / seeds)
  std::uint64_t escaped_samples = 0;  // frozen at the escape radius or at a singularity
  std::uint64_t outside_samples = 0;  // active but outside the histogram box
  double moment2_sum = 0.0;           // sum |Y|^2 over active samples
  std::uint64_t active_samples = 0;
  double gamma0_sup = 0.0;            // 1 / |gamma_0 box|
  double k_hat = 0.0;                 // sup over [0, n] of the expected pushforward density
  double density_bound = 0.0;         // gamma0_sup * k_hat * (1 + binning tolerance)
  bool density_bound_holds = false;
  std::size_t seeds = 0;
  std::vector<std::string> warnings;

  std::size_t bin_count() const { return counts.size(); }
  double bin_volume() const;
  std::vector<double> bin_center(std::size_t b) const;
  double mass(std::size_t b) const { return static_cast<double>(counts[b]) / static_cast<double>(samples); }
  double density(std::size_t b) const { return mass(b) / bin_volume(); }
  double gamma_hat_sup() const;
  double total_mass() const;  // binned mass, <= 1
  double escaped_mass() const { return static_cast<double>(escaped_samples) / static_cast<double>(samples); }
  double moment2() const { return active_samples ? moment2_sum / static_cast<double>(active_samples) : 0.0; }

  std::string to_json() const;
  CsvTable table() const;
};

/// Equal-weight merge of two occupation measures over adjacent windows of equal length
/// built from the same paths: counts add, so mu_{2n} is reproduced exactly.
OccupationMeasure merge(const OccupationMeasure& a, const OccupationMeasure& b);

/// Krylov–Bogoliubov averages from gamma_0 = uniform on `gamma0`, one measure per horizon.
/// Throws CheckFailed when more than `max_escaped_mass` escapes, ValidationError when the
/// certified constant is requested but C_1 > 0.
std::vector<OccupationMeasure> krylov_bogoliubov(const CoefficientField& field, const std::vector<std::uint64_t>& seeds,
                                                 const Box& gamma0, const HistogramSpec& histogram,
                                                 const KrylovOptions& options);

/// sup over bins |gamma_hat - (bin average of rho)| with the bin average by tensor
/// Gauss–Legendre quadrature.
double sup_density_distance(const OccupationMeasure& mu, const ScalarFn& rho);

struct InvarianceRow {
  std::string function;
  double semigroup_side = 0.0;  // int T_t phi d mu_hat
  double measure_side = 0.0;    // int phi d mu_hat
  double discrepancy = 0.0;
  double monte_carlo_error = 0.0;  // paired seed-to-seed standard error
  double measure_error = 0.0;      // seed-to-seed standard error of int phi d mu_hat
  double binning_error = 0.0;      // |piecewise-uniform integral - bin-centre integral|
  double combined_error = 0.0;
  bool within = false;  // discrepancy <= 3 * combined_error (or both zero)
};

struct InvarianceReport {
  double t = 0.0;
  std::size_t seeds = 0, points_per_seed = 0;
  std::vector<InvarianceRow> rows;
  bool holds = true;
};

/// |int T_t phi d mu_hat - int phi d mu_hat| with T_t phi from estimate_semigroup at
/// initial points drawn from the piecewise-uniform mu_hat (fresh points per seed).
InvarianceReport check_invariance(const CoefficientField& field, const OccupationMeasure& mu,
                                  const FunctionBank& bank, double t, double dt,
                                  const std::vector<std::uint64_t>& seeds, std::size_t points_per_seed,
                                  FlowOptions options = {});

/// E|Y_0|^2 / (C1 n) + C2 / C1, the coercivity envelope for the second moment of mu_n.
double coercivity_moment_envelope(double c1, double c2, double initial_moment2, double horizon);

/// Certified compression constant e^{C_1 T} on a grid; throws ValidationError when
/// C_1 > 0, since the constant then grows with T and the construction gives nothing.
double certified_compression(const CoefficientField& field, const PointSet& grid, double horizon);

}  // namespace aeflow
