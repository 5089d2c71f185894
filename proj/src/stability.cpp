#include "aeflow/stability.hpp"

#include <algorithm>
#include <cmath>

#include "aeflow/density.hpp"
#include "aeflow/parallel.hpp"

namespace aeflow {

StabilityReport log_functional(const FlowEnsemble& a, const FlowEnsemble& b, double n_radius, double radius,
                               double delta) {
  if (!a.initial.same_points(b.initial)) throw ValidationError("ensembles", "flows must share the initial grid");
  if (!same_path(*a.noise, *b.noise)) throw ValidationError("ensembles", "flows must be driven by the same Brownian path");
  if (!(delta > 0.0)) throw ValidationError("delta", "must be > 0");
  StabilityReport rep;
  rep.horizon = a.horizon();
  rep.n_radius = n_radius;
  rep.radius = radius;
  rep.delta = delta;
  rep.dim = a.d;
  rep.cell_mass = a.initial.cell_mass;

  // Snapshot pairs at common times.
  std::vector<std::pair<std::size_t, std::size_t>> shared;
  for (std::size_t i = 0; i < a.save_steps.size(); ++i) {
    const double t = a.noise->grid().time(a.save_steps[i]);
    for (std::size_t j = 0; j < b.save_steps.size(); ++j)
      if (std::abs(b.noise->grid().time(b.save_steps[j]) - t) <= 1e-9 * std::max(1.0, t)) shared.emplace_back(i, j);
  }
  rep.shared_snapshots = shared.size();

  const std::size_t n = a.size();
  const int d = a.d;
  rep.phi.assign(n, 0.0);
  rep.in_set.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    double phi = 0.0;
    for (const auto& [i, j] : shared) {
      const auto x = a.position(i, p), y = b.position(j, p);
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      phi = std::max(phi, s);
    }
    rep.phi[p] = phi;
    const bool in_ball = norm2(a.initial.point(p)) <= n_radius * n_radius;
    const bool in_g = !a.frozen(p) && !b.frozen(p) && a.sup_norm2[p] <= radius * radius &&
                      b.sup_norm2[p] <= radius * radius;
    if (in_ball && in_g) {
      rep.in_set[p] = 1;
      ++rep.set_size;
    }
  }
  rep.xi = xi_for_delta(rep, delta);
  double s = 0.0;
  for (std::size_t p = 0; p < n; ++p)
    if (rep.in_set[p]) s += rep.phi[p];
  rep.phi_integral = rep.cell_mass * s;
  return rep;
}

double xi_for_delta(const StabilityReport& rep, double delta) {
  const double d2 = delta * delta;
  double s = 0.0;
  for (std::size_t p = 0; p < rep.phi.size(); ++p)
    if (rep.in_set[p]) s += std::log1p(rep.phi[p] / d2);
  return rep.cell_mass * s;
}

ChebyshevReport chebyshev_bound(const StabilityReport& rep, double m) {
  if (!(m > 0.0)) throw ValidationError("M", "must be > 0");
  ChebyshevReport c;
  c.m = m;
  const double vol = ball_volume(rep.dim, rep.n_radius);
  c.first_term = 4.0 * rep.radius * rep.radius / m;
  const double growth = std::expm1(m * m);
  c.second_term = std::isfinite(growth) ? rep.delta * rep.delta * growth * vol : std::numeric_limits<double>::infinity();
  c.bound = c.first_term + c.second_term;
  c.empirical = rep.phi_integral;
  c.hypothesis_holds = rep.xi <= m;
  c.holds = c.empirical <= c.bound;
  c.vacuous = c.bound >= 4.0 * rep.radius * rep.radius * vol;
  return c;
}

CsvTable CauchyTable::table() const {
  CsvTable t({"n", "m", "delta_nm", "E_int_phi_q2", "standard_error", "xi_delta", "excluded_mass"});
  for (const auto& r : rows)
    t.row().add(r.n).add(r.m).add(r.delta_nm).add(r.expected_integral).add(r.standard_error).add(r.xi).add(
        r.excluded_mass);
  return t;
}

CauchyTable cauchy_diagnostic(const FieldFactory& factory, const std::vector<int>& levels,
                              const std::vector<std::uint64_t>& seeds, const PointSet& grid,
                              const CauchyOptions& opt) {
  if (levels.size() < 2) throw ValidationError("levels", "need at least two levels");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1]) throw ValidationError("levels", "must be strictly increasing");
  if (seeds.empty()) throw ValidationError("seeds", "need at least one seed");
  if (!(opt.q >= 1.0 && opt.q < 2.0)) throw ValidationError("q", "must lie in [1, 2)");

  std::vector<FieldPtr> fields;
  for (int n : levels) fields.push_back(factory(n));
  const int d = fields.front()->dim(), m = fields.front()->noise_dim();
  if (grid.dim != d) throw ValidationError("grid.d", "grid does not match the field dimension");
  const std::size_t pairs = levels.size() - 1;

  CauchyTable out;
  out.seeds = seeds.size();
  out.rows.resize(pairs);

  // delta_{n,m} on a lattice over B_R minus the excluded ball.
  {
    const auto per_axis = static_cast<std::int64_t>(std::ceil(2.0 * opt.radius / opt.distance_spacing));
    const Lattice lat = Lattice::cube(d, 0.5 * per_axis * opt.distance_spacing, per_axis);
    const PointSet full = restrict_to_shell(lattice_points(lat), 0.0, opt.radius);
    const PointSet ball = restrict_to_shell(full, opt.distance_exclude, opt.radius);
    for (std::size_t k = 0; k < pairs; ++k) {
      const auto [l1, l2] = field_distance(*fields[k], *fields[k + 1], ball);
      out.rows[k].n = levels[k];
      out.rows[k].m = levels[k + 1];
      out.rows[k].delta_nm = l1 + l2;
      out.rows[k].excluded_mass = static_cast<double>(full.size() - ball.size()) * full.cell_mass;
    }
  }

  const TimeGrid tg = TimeGrid::from_horizon(opt.horizon, opt.dt);
  const std::size_t np = grid.size();
  const double radius_escape = opt.flow.escape_radius > 0.0 ? opt.flow.escape_radius : default_escape_radius(grid);
  std::vector<double> sum(pairs, 0.0), sum2(pairs, 0.0), xi_sum(pairs, 0.0);
  std::vector<double> phi(pairs * np), supn(levels.size() * np);
  std::vector<std::uint8_t> frozen(levels.size() * np);
  constexpr std::size_t kBlock = 256;

  for (auto seed : seeds) {
    const NoiseBundle noise = generate(seed, m, tg, opt.flow.workers);
    const std::size_t blocks = (np + kBlock - 1) / kBlock;
    parallel_for(blocks, opt.flow.workers, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t p0 = b * kBlock, p1 = std::min(np, p0 + kBlock), cnt = p1 - p0;
        std::vector<EnsembleStepper> steppers;
        steppers.reserve(levels.size());
        for (const auto& f : fields)
          steppers.emplace_back(*f, noise, std::span<const double>(grid.coords.data() + p0 * d, cnt * d),
                                opt.flow.scheme, radius_escape, false);
        std::vector<double> local(pairs * cnt, 0.0);
        for (std::int64_t k = 0; k < tg.steps; ++k) {
          for (auto& s : steppers) s.step(k);
          for (std::size_t pr = 0; pr < pairs; ++pr) {
            const auto xa = steppers[pr].positions(), xb = steppers[pr + 1].positions();
            for (std::size_t p = 0; p < cnt; ++p) {
              double s2 = 0.0;
              for (int a = 0; a < d; ++a) {
                const double diff = xa[p * d + a] - xb[p * d + a];
                s2 += diff * diff;
              }
              local[pr * cnt + p] = std::max(local[pr * cnt + p], s2);
            }
          }
        }
        for (std::size_t pr = 0; pr < pairs; ++pr)
          for (std::size_t p = 0; p < cnt; ++p) phi[pr * np + p0 + p] = local[pr * cnt + p];
        for (std::size_t l = 0; l < levels.size(); ++l)
          for (std::size_t p = 0; p < cnt; ++p) {
            supn[l * np + p0 + p] = steppers[l].sup_norm2()[p];
            frozen[l * np + p0 + p] = steppers[l].state()[p] != ParticleState::active;
          }
      }
    });
    for (std::size_t pr = 0; pr < pairs; ++pr) {
      double integral = 0.0, xi = 0.0;
      const double delta = opt.delta > 0.0 ? opt.delta : out.rows[pr].delta_nm;
      for (std::size_t p = 0; p < np; ++p) {
        if (norm2(grid.point(p)) > opt.n_radius * opt.n_radius) continue;
        const double ph = phi[pr * np + p];
        integral += std::pow(ph, 0.5 * opt.q);
        const bool in_g = !frozen[pr * np + p] && !frozen[(pr + 1) * np + p] &&
                          supn[pr * np + p] <= opt.radius * opt.radius &&
                          supn[(pr + 1) * np + p] <= opt.radius * opt.radius;
        if (in_g) xi += std::log1p(ph / (delta * delta));
      }
      integral *= grid.cell_mass;
      xi *= grid.cell_mass;
      sum[pr] += integral;
      sum2[pr] += integral * integral;
      xi_sum[pr] += xi;
    }
  }
  const double s = static_cast<double>(seeds.size());
  for (std::size_t pr = 0; pr < pairs; ++pr) {
    auto& r = out.rows[pr];
    r.expected_integral = sum[pr] / s;
    const double var = s > 1.0 ? std::max(0.0, (sum2[pr] - s * r.expected_integral * r.expected_integral) / (s - 1.0)) : 0.0;
    r.standard_error = std::sqrt(var / s);
    r.xi = xi_sum[pr] / s;
  }
  return out;
}

UniquenessReport uniqueness_test(const FlowEnsemble& a, const FlowEnsemble& b, double n_radius, double radius,
                                 const std::vector<double>& deltas) {
  if (deltas.empty()) throw ValidationError("deltas", "need at least one delta");
  for (std::size_t i = 1; i < deltas.size(); ++i)
    if (!(deltas[i] < deltas[i - 1])) throw ValidationError("deltas", "must be strictly decreasing");
  UniquenessReport rep;
  StabilityReport base = log_functional(a, b, n_radius, radius, deltas.front());
  rep.phi_integral = base.phi_integral;
  for (double dl : deltas) rep.m = std::max(rep.m, xi_for_delta(base, dl));
  std::vector<double> lx, ly;
  for (double dl : deltas) {
    UniquenessRow row;
    row.delta = dl;
    base.delta = dl;
    base.xi = row.xi = xi_for_delta(base, dl);
    row.chebyshev = chebyshev_bound(base, rep.m > 0.0 ? rep.m : 1.0);
    rep.rows.push_back(row);
    lx.push_back(std::log(1.0 / dl));
    ly.push_back(row.xi);
  }
  if (lx.size() >= 2) {
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    rep.xi_slope = sxy / sxx;
  }
  return rep;
}

}  // namespace aeflow
