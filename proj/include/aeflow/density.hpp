#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aeflow/flow.hpp"

namespace aeflow {

/// log rho per particle at every snapshot of an ensemble, accumulated with left-point
/// sums of [div b - 1/2 d_i s^{jl} d_j s^{il}] dt + div s^{.l} dW^l.
struct DensityTrack {
  std::vector<std::int64_t> save_steps;
  std::vector<std::vector<double>> log_rho;
  std::vector<ParticleState> state;
};

/// Re-integrates `ensemble` with density tracking (same bundle, scheme, radius and
/// snapshots). Throws CheckFailed if the re-run trajectories differ from the ensemble.
DensityTrack track_density(const FlowEnsemble& ensemble, const CoefficientField& field, int workers = 0);

struct JacobianReport {
  std::vector<double> x;
  double horizon = 0.0, dt = 0.0, h_fd = 0.0;
  std::vector<double> jacobian;  // d x d row-major, d X_T^i / d x_j
  double det = 0.0;
  double rho = 0.0;
  double rel_error = 0.0;
  double condition = 0.0;
  bool ill_conditioned = false;  // condition > 1e12
  bool frozen = false;           // a perturbed start escaped or hit a singularity
};

/// det of the central-difference flow Jacobian at x against rho_T(x).
JacobianReport check_jacobian_identity(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise,
                                       std::span<const double> x, double horizon, double h_fd,
                                       FlowOptions options = {});

struct RefinementRow {
  double dt = 0.0, h_fd = 0.0, rel_error = 0.0;
};

struct JacobianRefinement {
  std::vector<RefinementRow> rows;
  double observed_order = 0.0;  // least-squares slope of log error vs log dt
};

/// Runs check_jacobian_identity on the same Brownian path coarsened from the finest
/// grid: dts[i] = dt_finest * 2^i style factors are taken from `factors`.
JacobianRefinement jacobian_refinement(const CoefficientField& field, std::uint64_t seed, std::span<const double> x,
                                       double horizon, double dt_finest, const std::vector<int>& factors,
                                       double h_fd, FlowOptions options = {});

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct MomentBoundReport {
  double p = 0.0, horizon = 0.0;
  double weighted_sup = 0.0;  // sup of [-div b + ... + (p/2)|div s|^2]^+ on the sup grid
  double bound = 0.0;         // exp(p T weighted_sup)
  std::vector<double> estimate;        // E rho_inverse^p per grid point
  std::vector<double> standard_error;  // across seeds
  double max_estimate = 0.0;
  double worst_margin = 0.0;  // max over points of (estimate - 3 se) / bound
  std::size_t frozen_excluded = 0;
  bool holds = false;
};

/// Monte Carlo E|det grad X_T^{-1}(x)|^p through the density of the reversed flow,
/// compared with exp(pT sup[...]^+). Holds when estimate - 3 se <= bound (1 + 1e-12)
/// at every point.
MomentBoundReport moment_bound_check(FieldPtr field, const PointSet& grid, const PointSet& sup_grid, double horizon,
                                     double dt, double p, const std::vector<std::uint64_t>& seeds,
                                     FlowOptions options = {});

struct CompressionSnapshot {
  double time = 0.0;
  double sup_density = 0.0;
  std::size_t bins_nonzero = 0;
  std::size_t escaped_count = 0;
  double sup_bin_count = 0.0;
};

struct MeasureEstimate {
  double bin_width = 0.0;
  double lattice_spacing = 0.0;
  std::vector<CompressionSnapshot> snapshots;
  double k_hat = 0.0;
  double k_hat_standard_error = 0.0;  // K_hat / sqrt(particles in the sup bin)
  std::size_t seeds = 0;
  std::vector<std::string> warnings;
  std::string to_json() const;
};

/// Histogram pushforward of the initial lattice (each particle carries h^d) averaged
/// over ensembles; bins of width `bin_width` (0: 2h) aligned with the lattice.
MeasureEstimate estimate_compression(const std::vector<const FlowEnsemble*>& ensembles, double bin_width = 0.0);
MeasureEstimate estimate_compression(const FlowEnsemble& ensemble, double bin_width = 0.0);

}  // namespace aeflow
