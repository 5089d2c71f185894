#include "aeflow/transport.hpp"

#include <algorithm>
#include <cmath>

#include "aeflow/density.hpp"
#include "aeflow/parallel.hpp"

namespace aeflow {

InitialDatum InitialDatum::constant(double c) {
  InitialDatum u;
  u.name = "constant";
  u.value = [c](std::span<const double>) { return c; };
  u.sup_abs = std::abs(c);
  u.lower = u.upper = c;
  return u;
}

InitialDatum InitialDatum::indicator_box(std::vector<double> lower, std::vector<double> upper) {
  if (lower.size() != upper.size()) throw ValidationError("indicator.box", "bounds differ in dimension");
  InitialDatum u;
  u.name = "indicator_box";
  u.value = [lower, upper](std::span<const double> x) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lower[i] || x[i] > upper[i]) return 0.0;
    return 1.0;
  };
  u.sup_abs = 1.0;
  u.lower = 0.0;
  u.upper = 1.0;
  return u;
}

InitialDatum InitialDatum::bump(std::vector<double> center, double width) {
  const auto f = TestFunction::bump(std::move(center), width);
  InitialDatum u;
  u.name = "bump";
  u.value = f.value;
  u.sup_abs = 1.0;
  u.lower = 0.0;
  u.upper = 1.0;
  return u;
}

InitialDatum InitialDatum::gaussian(std::vector<double> center, double width) {
  if (!(width > 0.0)) throw ValidationError("gaussian.width", "must be > 0");
  InitialDatum u;
  u.name = "gaussian";
  u.value = [center, width](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
    return std::exp(-0.5 * s / (width * width));
  };
  u.sup_abs = 1.0;
  u.lower = 0.0;
  u.upper = 1.0;
  return u;
}

InitialDatum InitialDatum::coordinate(int k) {
  InitialDatum u;
  u.name = "coordinate" + std::to_string(k);
  u.value = [k](std::span<const double> x) { return x[k]; };
  return u;
}

Renormalization parse_renormalization(const std::string& name) {
  if (name == "none") return Renormalization::none;
  if (name == "r") return Renormalization::identity;
  if (name == "r2") return Renormalization::square;
  if (name == "sin") return Renormalization::sine;
  throw ValidationError("renormalization", "unknown map '" + name + "' (none, r, r2, sin)");
}

std::string renormalization_name(Renormalization r) {
  switch (r) {
    case Renormalization::none: return "none";
    case Renormalization::identity: return "r";
    case Renormalization::square: return "r2";
    case Renormalization::sine: return "sin";
  }
  return "none";
}

double renormalize(Renormalization r, double u) {
  const double a = std::atan(u);
  switch (r) {
    case Renormalization::none: return u;
    case Renormalization::identity: return a;
    case Renormalization::square: return a * a;
    case Renormalization::sine: return std::sin(a);
  }
  return u;
}

std::size_t TransportSolution::snapshot_of(std::int64_t k) const {
  const auto it = std::lower_bound(save_steps.begin(), save_steps.end(), k);
  if (it == save_steps.end() || *it != k) throw ValidationError("solution", "step " + std::to_string(k) + " not saved");
  return static_cast<std::size_t>(it - save_steps.begin());
}

TransportSolution TransportSolution::renormalized(Renormalization r) const {
  TransportSolution out = *this;
  if (r == Renormalization::none) return out;
  out.datum_name = renormalization_name(r) + "(arctan " + datum_name + ")";
  for (auto& snap : out.values)
    for (double& v : snap)
      if (!std::isnan(v)) v = renormalize(r, v);
  return out;
}

CsvTable TransportSolution::snapshot_table(std::size_t snapshot) const {
  std::vector<std::string> header{"id"};
  for (int a = 0; a < grid.dim; ++a) header.push_back("x" + std::to_string(a));
  header.push_back("u");
  CsvTable t(header);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    t.row().add(p);
    for (double c : grid.point(p)) t.add(c);
    t.add(values[snapshot][p]);
  }
  return t;
}

TransportSolution solve_by_characteristics(FieldPtr field, std::shared_ptr<const NoiseBundle> noise,
                                           const InitialDatum& u0, const PointSet& grid,
                                           std::vector<std::int64_t> save_steps, FlowOptions options) {
  if (!noise) throw ValidationError("noise", "missing bundle");
  if (!u0.value) throw ValidationError("u0", "initial datum is not evaluable");
  if (grid.dim != field->dim()) throw ValidationError("grid.d", "grid does not match the field dimension");
  if (save_steps.empty())
    for (std::int64_t k = 0; k <= noise->steps(); ++k) save_steps.push_back(k);
  std::sort(save_steps.begin(), save_steps.end());
  save_steps.erase(std::unique(save_steps.begin(), save_steps.end()), save_steps.end());
  if (save_steps.front() < 0 || save_steps.back() > noise->steps())
    throw ValidationError("save_times", "outside the bundle horizon");

  TransportSolution sol;
  sol.grid = grid;
  sol.noise = noise;
  sol.field_name = field->name();
  sol.datum_name = u0.name;
  sol.save_steps = save_steps;
  const std::size_t n = grid.size();

  sol.u0_sup_declared = !std::isnan(u0.sup_abs);
  if (sol.u0_sup_declared) {
    sol.u0_sup = u0.sup_abs;
  } else {
    for (std::size_t p = 0; p < n; ++p) sol.u0_sup = std::max(sol.u0_sup, std::abs(u0.value(grid.point(p))));
  }

  options.save_every = 0;
  options.save_steps.clear();
  options.track_density = false;
  if (options.escape_radius <= 0.0) options.escape_radius = default_escape_radius(grid);

  for (const auto k : save_steps) {
    std::vector<double> u(n);
    std::size_t undefined = 0, escaped = 0;
    if (k == 0) {
      for (std::size_t p = 0; p < n; ++p) u[p] = u0.value(grid.point(p));
    } else {
      const auto inv = integrate_inverse(field, noise, noise->grid().time(k), grid, options);
      for (std::size_t p = 0; p < n; ++p) {
        if (inv.state[p] == ParticleState::singular_hit) {
          u[p] = std::numeric_limits<double>::quiet_NaN();
          ++undefined;
          continue;
        }
        if (inv.state[p] == ParticleState::escaped) ++escaped;
        u[p] = u0.value(inv.final_position(p));
      }
    }
    double sup = 0.0;
    for (double v : u) {
      if (std::isnan(v)) continue;
      sup = std::max(sup, std::abs(v));
      if (std::abs(v) > sol.u0_sup || v < u0.lower || v > u0.upper) ++sol.max_principle_violations;
    }
    sol.values.push_back(std::move(u));
    sol.undefined.push_back(undefined);
    sol.escaped.push_back(escaped);
    sol.sup_abs.push_back(sup);
  }
  sol.max_principle = sol.max_principle_violations == 0;
  return sol;
}

WeakFormReport weak_form_residual(const TransportSolution& sol, const CoefficientField& field,
                                  const FunctionBank& bank, double t) {
  const PointSet& grid = sol.grid;
  const int d = grid.dim, m = field.noise_dim();
  if (!field.constant_diffusion)
    throw ValidationError("field", "the weak form is implemented for x-independent sigma only");
  if (!(grid.lattice_spacing > 0.0) || grid.lattice_lower.empty())
    throw ValidationError("grid", "weak-form quadrature needs a lattice grid");
  const std::int64_t kt = sol.noise->grid().index_of(t);
  for (std::int64_t k = 0; k <= kt; ++k) (void)sol.snapshot_of(k);

  const std::size_t n = grid.size();
  std::vector<double> upper(d, -std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < n; ++p)
    for (int a = 0; a < d; ++a) upper[a] = std::max(upper[a], grid.point(p)[a] + 0.5 * grid.lattice_spacing);
  for (const auto& phi : bank) {
    if (phi.dim != d) throw ValidationError("test_functions", phi.name + ": dimension mismatch");
    if (!phi.compact()) throw ValidationError("test_functions", phi.name + ": support is not compact");
    for (int a = 0; a < d; ++a)
      if (phi.center[a] - phi.support_radius < grid.lattice_lower[a] ||
          phi.center[a] + phi.support_radius > upper[a])
        throw ValidationError("test_functions", phi.name + ": support exits the grid box");
  }

  // Time-independent node data.
  std::vector<double> sigma(static_cast<std::size_t>(d) * m);
  field.diffusion(grid.point(0), sigma);
  std::vector<double> a_ij(static_cast<std::size_t>(d) * d, 0.0);  // s s^T
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < m; ++l) a_ij[i * d + j] += sigma[i * m + l] * sigma[j * m + l];

  WeakFormReport rep;
  rep.time = t;
  const double mass = grid.cell_mass;
  const double dt = sol.noise->dt();
  std::vector<double> b(d), jac(static_cast<std::size_t>(d) * d), g(d), h(static_cast<std::size_t>(d) * d);
  for (const auto& phi : bank) {
    std::vector<double> f(n), drift_term(n), noise_term(n * m);
    for (std::size_t p = 0; p < n; ++p) {
      const auto x = grid.point(p);
      double q = 0.0;
      for (int a = 0; a < d; ++a) q += (x[a] - phi.center[a]) * (x[a] - phi.center[a]);
      if (q >= phi.support_radius * phi.support_radius) continue;  // phi and its derivatives vanish
      f[p] = phi.value(x);
      field.drift(x, b);
      field.drift_jacobian(x, jac);
      phi.gradient(x, g);
      phi.hessian(x, h);
      double divb = 0.0, second = 0.0, transport = 0.0;
      for (int i = 0; i < d; ++i) {
        divb += jac[i * d + i];
        transport += b[i] * g[i];
        for (int j = 0; j < d; ++j) second += a_ij[i * d + j] * h[i * d + j];
      }
      drift_term[p] = 0.5 * second + divb * f[p] + transport;
      for (int l = 0; l < m; ++l) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += sigma[i * m + l] * g[i];
        noise_term[p * m + l] = s;
      }
    }
    auto integrate = [&](const std::vector<double>& v, const std::vector<double>& w, std::size_t stride,
                         std::size_t off) {
      double s = 0.0;
      for (std::size_t p = 0; p < n; ++p) s += v[p] * w[p * stride + off];
      return s * mass;
    };
    WeakFormRow row;
    row.function = phi.name;
    row.lhs = integrate(sol.values[sol.snapshot_of(kt)], f, 1, 0);
    double rhs = integrate(sol.values[sol.snapshot_of(0)], f, 1, 0);
    for (std::int64_t k = 0; k < kt; ++k) {
      const auto& v = sol.values[sol.snapshot_of(k)];
      rhs += dt * integrate(v, drift_term, 1, 0);
      const auto dw = sol.noise->increment(k);
      for (int l = 0; l < m; ++l) rhs += dw[l] * integrate(v, noise_term, m, l);
    }
    row.rhs = rhs;
    row.residual = std::abs(row.lhs - row.rhs);
    rep.max_residual = std::max(rep.max_residual, row.residual);
    rep.rows.push_back(row);
  }
  return rep;
}

WeakFormRefinement weak_form_refinement(FieldPtr field, const std::vector<std::uint64_t>& seeds,
                                        const InitialDatum& u0, const PointSet& grid, double horizon,
                                        double dt_finest, const std::vector<int>& factors, const FunctionBank& bank,
                                        Renormalization renormalization, FlowOptions options) {
  if (seeds.empty()) throw ValidationError("seeds", "need at least one seed");
  if (factors.size() < 2) throw ValidationError("factors", "need at least two refinement levels");
  WeakFormRefinement out;
  out.renormalization = renormalization;
  out.levels.resize(factors.size());
  for (auto& lv : out.levels) lv.per_function.assign(bank.size(), 0.0);
  const TimeGrid fine_grid = TimeGrid::from_horizon(horizon, dt_finest);
  for (auto seed : seeds) {
    const auto fine = generate(seed, field->noise_dim(), fine_grid, options.workers);
    for (std::size_t i = 0; i < factors.size(); ++i) {
      auto noise = std::make_shared<const NoiseBundle>(factors[i] == 1 ? fine : coarsen(fine, factors[i]));
      const auto sol = solve_by_characteristics(field, noise, u0, grid, {}, options).renormalized(renormalization);
      const auto rep = weak_form_residual(sol, *field, bank, horizon);
      out.levels[i].dt = noise->dt();
      for (std::size_t j = 0; j < bank.size(); ++j) out.levels[i].per_function[j] += rep.rows[j].residual * rep.rows[j].residual;
    }
  }
  const double s = static_cast<double>(seeds.size());
  std::vector<double> dts, rms;
  for (auto& lv : out.levels) {
    double total = 0.0;
    for (double& v : lv.per_function) {
      total += v;
      v = std::sqrt(v / s);
    }
    lv.rms_residual = std::sqrt(total / (s * static_cast<double>(bank.size())));
    dts.push_back(lv.dt);
    rms.push_back(std::max(lv.rms_residual, 1e-300));
  }
  out.observed_order = loglog_slope(dts, rms);
  return out;
}

KolmogorovSolution backward_kolmogorov(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise,
                                       const ScalarFn& v0, const PointSet& grid, double t,
                                       const std::vector<double>& s_values, FlowOptions options) {
  if (!noise) throw ValidationError("noise", "missing bundle");
  const std::int64_t kt = noise->grid().index_of(t);
  if (kt > noise->steps()) throw ValidationError("t", "exceeds the bundle horizon");
  KolmogorovSolution out;
  out.grid = grid;
  out.t = t;
  out.s_values = s_values;
  options.save_every = 0;
  options.save_steps.clear();
  if (options.escape_radius <= 0.0) options.escape_radius = default_escape_radius(grid);
  for (double s : s_values) {
    const std::int64_t ks = noise->grid().index_of(s);
    if (ks < 0 || ks > kt) throw ValidationError("s", "must lie in [0, t]");
    if (ks == kt) {
      std::vector<double> v(grid.size());
      for (std::size_t p = 0; p < grid.size(); ++p) v[p] = v0(grid.point(p));
      out.values.push_back(std::move(v));
      out.endpoints.push_back(grid.coords);
      continue;
    }
    auto shifted = std::make_shared<const NoiseBundle>(shift_steps(*noise, ks));
    options.steps = kt - ks;
    const auto ens = integrate_forward(field, shifted, grid, options);
    std::vector<double> v(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) v[p] = v0(ens.final_position(p));
    out.values.push_back(std::move(v));
    out.endpoints.push_back(ens.positions.back());
  }
  return out;
}

ParabolicMean parabolic_mean(const std::vector<TransportSolution>& sols) {
  if (sols.size() < 8) throw ValidationError("seeds", "parabolic mean needs at least 8 solutions");
  const auto& s0 = sols.front();
  for (const auto& s : sols)
    if (!s.grid.same_points(s0.grid) || s.save_steps != s0.save_steps)
      throw ValidationError("solutions", "solutions must share the grid and save steps");
  ParabolicMean out;
  out.save_steps = s0.save_steps;
  out.seeds = sols.size();
  const std::size_t n = s0.grid.size();
  for (std::size_t snap = 0; snap < s0.save_steps.size(); ++snap) {
    std::vector<double> mean(n, 0.0), m2(n, 0.0), se(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> cnt(n, 0);
    for (const auto& s : sols)
      for (std::size_t p = 0; p < n; ++p) {
        const double v = s.values[snap][p];
        if (std::isnan(v)) continue;
        ++cnt[p];
        const double delta = v - mean[p];
        mean[p] += delta / static_cast<double>(cnt[p]);
        m2[p] += delta * (v - mean[p]);
      }
    for (std::size_t p = 0; p < n; ++p) {
      if (cnt[p] == 0) {
        mean[p] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const double c = static_cast<double>(cnt[p]);
      se[p] = cnt[p] > 1 ? std::sqrt(m2[p] / (c - 1.0) / c) : 0.0;
    }
    out.mean.push_back(std::move(mean));
    out.standard_error.push_back(std::move(se));
    out.samples.push_back(std::move(cnt));
  }
  return out;
}

}  // namespace aeflow
