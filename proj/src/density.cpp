#include "aeflow/density.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include "json.hpp"

namespace aeflow {

DensityTrack track_density(const FlowEnsemble& ens, const CoefficientField& field, int workers) {
  FlowOptions opt;
  opt.scheme = ens.scheme;
  opt.escape_radius = ens.escape_radius;
  opt.steps = ens.steps;
  opt.save_steps = ens.save_steps;
  opt.track_density = true;
  opt.workers = workers;
  const auto tracked = integrate_forward(field, ens.noise, ens.initial, opt);
  if (tracked.positions != ens.positions || tracked.state != ens.state)
    throw CheckFailed("track_density: re-run trajectories differ from the ensemble (field or bundle mismatch)");
  return {tracked.save_steps, tracked.log_rho, tracked.state};
}

JacobianReport check_jacobian_identity(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise,
                                       std::span<const double> x, double horizon, double h_fd, FlowOptions options) {
  const int d = field.dim();
  if (static_cast<int>(x.size()) != d) throw ValidationError("x", "dimension mismatch");
  if (!(h_fd > 0.0)) throw ValidationError("h_fd", "must be > 0");
  JacobianReport rep;
  rep.x.assign(x.begin(), x.end());
  rep.horizon = horizon;
  rep.dt = noise->dt();
  rep.h_fd = h_fd;

  PointSet starts;
  starts.dim = d;
  starts.coords.assign(x.begin(), x.end());
  for (int k = 0; k < d; ++k)
    for (double sgn : {1.0, -1.0}) {
      std::vector<double> y(x.begin(), x.end());
      y[k] += sgn * h_fd;
      starts.coords.insert(starts.coords.end(), y.begin(), y.end());
    }
  options.steps = noise->grid().index_of(horizon);
  options.track_density = true;
  options.save_every = 0;
  options.save_steps.clear();
  if (options.escape_radius <= 0.0) options.escape_radius = default_escape_radius(starts);
  const auto ens = integrate_forward(field, noise, starts, options);
  for (std::size_t p = 0; p < ens.size(); ++p) rep.frozen = rep.frozen || ens.frozen(p);

  Eigen::MatrixXd jac(d, d);
  for (int k = 0; k < d; ++k) {
    const auto plus = ens.final_position(1 + 2 * k), minus = ens.final_position(2 + 2 * k);
    for (int i = 0; i < d; ++i) jac(i, k) = (plus[i] - minus[i]) / (2.0 * h_fd);
  }
  rep.jacobian.resize(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) rep.jacobian[i * d + k] = jac(i, k);
  rep.det = jac.determinant();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const auto& sv = svd.singularValues();
  rep.condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  rep.ill_conditioned = rep.condition > 1e12;
  rep.rho = std::exp(ens.log_rho.back()[0]);
  rep.rel_error = std::abs(rep.det - rep.rho) / rep.rho;
  return rep;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ValidationError("loglog_slope", "need >= 2 matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::log(x[i]) - mx;
    sxy += a * (std::log(y[i]) - my);
    sxx += a * a;
  }
  return sxy / sxx;
}

JacobianRefinement jacobian_refinement(const CoefficientField& field, std::uint64_t seed, std::span<const double> x,
                                       double horizon, double dt_finest, const std::vector<int>& factors,
                                       double h_fd, FlowOptions options) {
  const auto fine = generate(seed, field.noise_dim(), TimeGrid::from_horizon(horizon, dt_finest), options.workers);
  JacobianRefinement out;
  std::vector<double> dts, errs;
  for (int f : factors) {
    auto noise = std::make_shared<const NoiseBundle>(f == 1 ? fine : coarsen(fine, f));
    const auto rep = check_jacobian_identity(field, noise, x, horizon, h_fd, options);
    out.rows.push_back({noise->dt(), h_fd, rep.rel_error});
    dts.push_back(noise->dt());
    errs.push_back(std::max(rep.rel_error, 1e-300));
  }
  if (dts.size() >= 2) out.observed_order = loglog_slope(dts, errs);
  return out;
}

MomentBoundReport moment_bound_check(FieldPtr field, const PointSet& grid, const PointSet& sup_grid, double horizon,
                                     double dt, double p, const std::vector<std::uint64_t>& seeds,
                                     FlowOptions options) {
  if (seeds.empty()) throw ValidationError("seeds", "need at least one seed");
  if (!(p > 0.0)) throw ValidationError("p", "must be > 0");
  MomentBoundReport rep;
  rep.p = p;
  rep.horizon = horizon;
  rep.weighted_sup = check_en3(*field, sup_grid, 0.5 * p).positive_part;
  rep.bound = std::exp(p * horizon * rep.weighted_sup);

  const std::size_t n = grid.size();
  std::vector<double> sum(n, 0.0), sum2(n, 0.0);
  std::vector<std::size_t> used(n, 0);
  options.track_density = true;
  const TimeGrid tg = TimeGrid::from_horizon(horizon, dt);
  for (auto seed : seeds) {
    auto noise = std::make_shared<const NoiseBundle>(generate(seed, field->noise_dim(), tg, options.workers));
    const auto ens = integrate_inverse(field, noise, horizon, grid, options);
    for (std::size_t i = 0; i < n; ++i) {
      if (ens.frozen(i)) {
        ++rep.frozen_excluded;
        continue;
      }
      const double v = std::exp(p * ens.log_rho.back()[i]);
      sum[i] += v;
      sum2[i] += v * v;
      ++used[i];
    }
  }
  rep.estimate.assign(n, std::nan(""));
  rep.standard_error.assign(n, std::nan(""));
  rep.holds = true;
  rep.worst_margin = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i] == 0) continue;
    const double s = static_cast<double>(used[i]);
    const double mean = sum[i] / s;
    const double var = s > 1.0 ? std::max(0.0, (sum2[i] - s * mean * mean) / (s - 1.0)) : 0.0;
    rep.estimate[i] = mean;
    rep.standard_error[i] = std::sqrt(var / s);
    rep.max_estimate = std::max(rep.max_estimate, mean);
    const double lower = mean - 3.0 * rep.standard_error[i];
    rep.worst_margin = std::max(rep.worst_margin, lower / rep.bound);
    if (lower > rep.bound * (1.0 + 1e-12)) rep.holds = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------------

std::string MeasureEstimate::to_json() const {
  nlohmann::ordered_json j;
  j["bin_width"] = bin_width;
  j["K_hat"] = k_hat;
  j["K_hat_standard_error"] = k_hat_standard_error;
  j["seeds"] = seeds;
  auto& arr = j["snapshots"] = nlohmann::ordered_json::array();
  for (const auto& s : snapshots) {
    arr.push_back({{"time", s.time},
                   {"sup_density", s.sup_density},
                   {"K_hat", s.sup_density},
                   {"bins_nonzero", s.bins_nonzero},
                   {"escaped_count", s.escaped_count}});
  }
  j["warnings"] = warnings;
  return j.dump(2);
}

MeasureEstimate estimate_compression(const std::vector<const FlowEnsemble*>& ensembles, double bin_width) {
  if (ensembles.empty()) throw ValidationError("ensembles", "need at least one ensemble");
  const FlowEnsemble& e0 = *ensembles.front();
  const double h = e0.initial.lattice_spacing;
  if (!(h > 0.0) || e0.initial.lattice_lower.empty())
    throw ValidationError("grid", "compression estimates need lattice initial points");
  for (const auto* e : ensembles)
    if (!e->initial.same_points(e0.initial) || e->save_steps != e0.save_steps)
      throw ValidationError("ensembles", "ensembles must share initial lattice and snapshots");

  MeasureEstimate est;
  est.lattice_spacing = h;
  est.bin_width = bin_width > 0.0 ? bin_width : 2.0 * h;
  est.seeds = ensembles.size();
  const int d = e0.d;
  const double hb = est.bin_width;
  const double mass = std::pow(h, d);  // particle mass; initial density is 1
  const double bin_volume = std::pow(hb, d);
  const double seeds = static_cast<double>(ensembles.size());
  const auto& lower = e0.initial.lattice_lower;
  double worst_escape_fraction = 0.0;

  for (std::size_t snap = 0; snap < e0.save_steps.size(); ++snap) {
    const std::int64_t k = e0.save_steps[snap];
    std::map<std::vector<std::int64_t>, double> bins;
    std::size_t escaped = 0;
    std::vector<std::int64_t> key(d);
    for (const auto* e : ensembles) {
      for (std::size_t p = 0; p < e->size(); ++p) {
        if (e->state[p] == ParticleState::escaped && e->event_step[p] <= k) {
          ++escaped;
          continue;
        }
        const auto x = e->position(snap, p);
        for (int a = 0; a < d; ++a) key[a] = static_cast<std::int64_t>(std::floor((x[a] - lower[a]) / hb));
        bins[key] += 1.0;
      }
    }
    CompressionSnapshot s;
    s.time = e0.noise->grid().time(k);
    s.escaped_count = escaped;
    s.bins_nonzero = bins.size();
    for (const auto& [_, c] : bins) s.sup_bin_count = std::max(s.sup_bin_count, c / seeds);
    s.sup_density = s.sup_bin_count * mass / bin_volume;
    worst_escape_fraction =
        std::max(worst_escape_fraction, static_cast<double>(escaped) / (seeds * static_cast<double>(e0.size())));
    if (s.sup_density > est.k_hat) {
      est.k_hat = s.sup_density;
      est.k_hat_standard_error = s.sup_density / std::sqrt(std::max(1.0, s.sup_bin_count * seeds));
    }
    est.snapshots.push_back(s);
  }
  if (worst_escape_fraction > 0.05)
    est.warnings.push_back("more than 5% of particles escaped; K_hat is biased downward");
  return est;
}

MeasureEstimate estimate_compression(const FlowEnsemble& ensemble, double bin_width) {
  return estimate_compression(std::vector<const FlowEnsemble*>{&ensemble}, bin_width);
}

}  // namespace aeflow
