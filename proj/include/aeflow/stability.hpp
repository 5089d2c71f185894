#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "aeflow/flow.hpp"
#include "aeflow/io.hpp"

namespace aeflow {

/// Log-distance functional between two flows on one Brownian path:
///   Phi(x) = sup_t |X_t(x) - hat X_t(x)|^2 over the shared snapshot times,
///   xi = cell_mass * sum over B_N and G_T^R of log(Phi / delta^2 + 1),
/// with G_T^R = {x : sup_t |X_t(x)| v |hat X_t(x)| <= R}. Frozen particles lie outside G.
struct StabilityReport {
  int dim = 0;
  double horizon = 0.0, n_radius = 0.0, radius = 0.0, delta = 0.0;
  std::vector<double> phi;
  std::vector<std::uint8_t> in_set;
  std::size_t set_size = 0;
  double cell_mass = 0.0;
  double xi = 0.0;
  double phi_integral = 0.0;  // cell_mass * sum Phi over the truncated set
  std::size_t shared_snapshots = 0;
  bool pathwise = true;  // single bundle, no expectation taken
};

StabilityReport log_functional(const FlowEnsemble& a, const FlowEnsemble& b, double n_radius, double radius,
                               double delta);

/// xi recomputed for another delta from a report's Phi (same truncated set).
double xi_for_delta(const StabilityReport& report, double delta);

struct ChebyshevReport {
  double m = 0.0;
  double first_term = 0.0;   // 4R^2 / M
  double second_term = 0.0;  // delta^2 (e^{M^2} - 1) |B_N|
  double bound = 0.0;        // inf when e^{M^2} overflows
  double empirical = 0.0;    // int Phi over the truncated set
  bool hypothesis_holds = false;  // xi <= M
  bool holds = false;             // empirical <= bound
  bool vacuous = false;           // bound >= (2R)^2 |B_N|, which Phi <= (2R)^2 gives for free
};

/// Chebyshev conversion of a xi bound into a bound on int Phi, using the e^{M^2} form.
ChebyshevReport chebyshev_bound(const StabilityReport& report, double m);

using FieldFactory = std::function<FieldPtr(int level)>;

struct CauchyOptions {
  double horizon = 0.25;
  double dt = 1e-3;
  double q = 1.5;
  double n_radius = 2.0;     // N: integrate over B_N
  double radius = 10.0;      // R: truncation for G and the field distance ball B_R
  double delta = 0.0;        // 0: use delta_{n,m}
  double distance_exclude = 0.0;  // ball around the origin excluded from the delta_{n,m} integrals
  double distance_spacing = 0.1;  // lattice spacing for delta_{n,m}
  FlowOptions flow;
};

struct CauchyRow {
  int n = 0, m = 0;
  double delta_nm = 0.0;
  double excluded_mass = 0.0;  // lattice mass of B_R removed around the singularity
  double expected_integral = 0.0;  // E int_{B_N} Phi^{q/2}
  double standard_error = 0.0;
  double xi = 0.0;  // mean over seeds
};

struct CauchyTable {
  std::vector<CauchyRow> rows;
  std::size_t seeds = 0;
  CsvTable table() const;
};

/// For consecutive levels (n, m): E int_{B_N} sup_t |X_n - X_m|^q under common noise
/// (sup over every step, flows advanced in lockstep), mean over seeds, plus delta_{n,m}
/// = int_{B_R}|b_n - b_m| + (int_{B_R}|s_n - s_m|^2)^{1/2}.
CauchyTable cauchy_diagnostic(const FieldFactory& factory, const std::vector<int>& levels,
                              const std::vector<std::uint64_t>& seeds, const PointSet& grid,
                              const CauchyOptions& options);

struct UniquenessRow {
  double delta = 0.0;
  double xi = 0.0;
  ChebyshevReport chebyshev;
};

struct UniquenessReport {
  std::vector<UniquenessRow> rows;
  double phi_integral = 0.0;
  double xi_slope = 0.0;  // least-squares slope of xi against log(1/delta)
  double m = 0.0;         // sup over the sequence of xi
};

UniquenessReport uniqueness_test(const FlowEnsemble& a, const FlowEnsemble& b, double n_radius, double radius,
                                 const std::vector<double>& deltas);

}  // namespace aeflow
