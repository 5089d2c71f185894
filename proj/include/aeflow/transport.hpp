#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "aeflow/bank.hpp"
#include "aeflow/flow.hpp"

namespace aeflow {

/// Initial datum u0 with a declared sup norm (used by the max-principle check).
struct InitialDatum {
  std::string name;
  ScalarFn value;
  /// ||u0||_inf over R^d; nan when unknown (the grid max of |u0| is used instead).
  double sup_abs = std::numeric_limits<double>::quiet_NaN();
  double lower = -std::numeric_limits<double>::infinity();  // inf u0 when known
  double upper = std::numeric_limits<double>::infinity();   // sup u0 when known

  static InitialDatum constant(double c);
  /// Indicator of the box [lower, upper].
  static InitialDatum indicator_box(std::vector<double> lower, std::vector<double> upper);
  static InitialDatum bump(std::vector<double> center, double width);
  /// exp(-|x - c|^2 / (2 w^2)).
  static InitialDatum gaussian(std::vector<double> center, double width);
  /// The k-th coordinate (unbounded; no sup norm).
  static InitialDatum coordinate(int k);
};

/// Renormalising maps applied as v = beta(arctan u).
enum class Renormalization { none, identity, square, sine };
Renormalization parse_renormalization(const std::string& name);
std::string renormalization_name(Renormalization r);
double renormalize(Renormalization r, double u);

/// u_t(x_i) = u0(X_t^{-1}(x_i)) at the requested save steps, for one bundle.
struct TransportSolution {
  PointSet grid;
  std::shared_ptr<const NoiseBundle> noise;
  std::string field_name;
  std::string datum_name;
  std::vector<std::int64_t> save_steps;
  std::vector<std::vector<double>> values;  // per snapshot; nan where undefined
  std::vector<std::size_t> undefined;       // singular-hit inverse characteristics, per snapshot
  std::vector<std::size_t> escaped;         // stopped at the escape radius, per snapshot
  double u0_sup = 0.0;
  bool u0_sup_declared = false;
  std::vector<double> sup_abs;  // ||u_t||_inf over defined nodes, per snapshot
  bool max_principle = true;    // sup_abs <= u0_sup and values within [inf u0, sup u0]
  std::size_t max_principle_violations = 0;

  std::size_t snapshot_of(std::int64_t k) const;
  double time(std::size_t snapshot) const { return noise->grid().time(save_steps[snapshot]); }
  /// v = beta(arctan u), snapshot by snapshot (nan stays nan).
  TransportSolution renormalized(Renormalization r) const;
  /// Per-snapshot CSV grid: id, x..., u.
  CsvTable snapshot_table(std::size_t snapshot) const;
};

/// Inverse characteristics from each node for every requested save time. `save_steps`
/// empty selects every step 0..K of the bundle. The max principle is checked, never
/// enforced.
TransportSolution solve_by_characteristics(FieldPtr field, std::shared_ptr<const NoiseBundle> noise,
                                           const InitialDatum& u0, const PointSet& grid,
                                           std::vector<std::int64_t> save_steps = {}, FlowOptions options = {});

struct WeakFormRow {
  std::string function;
  double lhs = 0.0;  // int v_t phi
  double rhs = 0.0;
  double residual = 0.0;
};

struct WeakFormReport {
  double time = 0.0;
  std::vector<WeakFormRow> rows;
  double max_residual = 0.0;
};

/// Residual of the distributional identity for the transport equation solved by
/// u0(X_t^{-1}) with x-independent sigma:
///   int v_t phi = int v_0 phi + 1/2 int int v s^{il} s^{jl} d_ij phi
///                 + int int v (div b phi + b^i d_i phi) + int int v s^{il} d_i phi dW^l.
/// Space integrals by lattice quadrature, time integrals by left-point sums, the
/// stochastic integral by left-point Ito sums with the increments that drove the flow.
/// The solution must contain every step up to t; test functions whose support leaves the
/// grid box are rejected.
WeakFormReport weak_form_residual(const TransportSolution& solution, const CoefficientField& field,
                                  const FunctionBank& bank, double t);

struct WeakFormLevel {
  double dt = 0.0;
  double rms_residual = 0.0;  // over seeds and test functions
  std::vector<double> per_function;  // rms over seeds
};

struct WeakFormRefinement {
  Renormalization renormalization = Renormalization::none;
  std::vector<WeakFormLevel> levels;
  double observed_order = 0.0;  // log-log slope of rms residual vs dt
};

/// Weak-form residual at the horizon on one Brownian path per seed, coarsened from the
/// finest grid by `factors`.
WeakFormRefinement weak_form_refinement(FieldPtr field, const std::vector<std::uint64_t>& seeds,
                                        const InitialDatum& u0, const PointSet& grid, double horizon,
                                        double dt_finest, const std::vector<int>& factors, const FunctionBank& bank,
                                        Renormalization renormalization = Renormalization::none,
                                        FlowOptions options = {});

/// v_{s,t}(x_i) = v0(X_{s,t}(x_i)): forward integration from s to t on shift(bundle, s).
struct KolmogorovSolution {
  PointSet grid;
  double t = 0.0;
  std::vector<double> s_values;
  std::vector<std::vector<double>> values;  // per s
  std::vector<std::vector<double>> endpoints;  // X_{s,t}(x_i), per s, N*d
};

KolmogorovSolution backward_kolmogorov(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise,
                                       const ScalarFn& v0, const PointSet& grid, double t,
                                       const std::vector<double>& s_values, FlowOptions options = {});

struct ParabolicMean {
  std::vector<std::int64_t> save_steps;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> standard_error;
  std::vector<std::vector<std::size_t>> samples;  // defined values per node
  std::size_t seeds = 0;
};

/// Mean over seeds of u_t(x), node by node. Needs at least 8 solutions on the same grid
/// and save steps.
ParabolicMean parabolic_mean(const std::vector<TransportSolution>& solutions);

}  // namespace aeflow
