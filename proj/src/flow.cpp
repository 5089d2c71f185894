#include "aeflow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "aeflow/kernels.hpp"
#include "aeflow/parallel.hpp"

namespace aeflow {

Scheme parse_scheme(const std::string& name) {
  if (name == "euler_maruyama" || name == "euler") return Scheme::euler_maruyama;
  if (name == "milstein_diag" || name == "milstein") return Scheme::milstein_diag;
  throw ValidationError("scheme", "unknown scheme '" + name + "' (euler_maruyama | milstein_diag)");
}

std::string scheme_name(Scheme s) { return s == Scheme::milstein_diag ? "milstein_diag" : "euler_maruyama"; }

std::string state_name(ParticleState s) {
  switch (s) {
    case ParticleState::active: return "active";
    case ParticleState::escaped: return "escaped";
    case ParticleState::singular_hit: return "singular_hit";
  }
  return "?";
}

std::size_t FlowEnsemble::snapshot_of(std::int64_t k) const {
  const auto it = std::lower_bound(save_steps.begin(), save_steps.end(), k);
  if (it == save_steps.end() || *it != k) throw ValidationError("snapshot", "step " + std::to_string(k) + " was not saved");
  return static_cast<std::size_t>(it - save_steps.begin());
}

std::size_t FlowEnsemble::count(ParticleState s) const {
  return static_cast<std::size_t>(std::count(state.begin(), state.end(), s));
}

CsvTable FlowEnsemble::snapshot_table(std::size_t snapshot) const {
  std::vector<std::string> header{"id"};
  for (int a = 0; a < d; ++a) header.push_back("x" + std::to_string(a));
  header.insert(header.end(), {"log_rho", "state", "event_step"});
  CsvTable t(std::move(header));
  const std::int64_t k = save_steps[snapshot];
  for (std::size_t p = 0; p < size(); ++p) {
    t.row().add(p);
    for (double v : position(snapshot, p)) t.add(v);
    t.add(log_rho.empty() ? std::nan("") : log_rho[snapshot][p]);
    // A particle is reported frozen only from its event step on.
    const bool hit = event_step[p] >= 0 && event_step[p] <= k;
    t.add(hit ? state_name(state[p]) : std::string("active"));
    t.add(static_cast<long long>(hit ? event_step[p] : -1));
  }
  return t;
}

// ---------------------------------------------------------------------------------

EnsembleStepper::EnsembleStepper(const CoefficientField& field, const NoiseBundle& noise, std::span<const double> start,
                                 Scheme scheme, double escape_radius, bool track_density)
    : field_(field),
      noise_(noise),
      d_(field.dim()),
      m_(field.noise_dim()),
      n_(start.size() / static_cast<std::size_t>(field.dim())),
      scheme_(scheme),
      radius2_(escape_radius * escape_radius),
      track_(track_density),
      x_(start.begin(), start.end()),
      jet_(field.dim(), field.noise_dim()) {
  if (noise.noise_dim() != m_) throw ValidationError("noise.m", "bundle dimension does not match the field");
  drift_.assign(n_ * d_, 0.0);
  diff_.assign(n_ * d_ * m_, 0.0);
  if (track_) {
    log_rho_.assign(n_, 0.0);
    rate_.assign(n_, 0.0);
    coef_.assign(n_ * m_, 0.0);
  }
  if (scheme_ == Scheme::milstein_diag) corr_.assign(n_ * d_, 0.0);
  state_.assign(n_, ParticleState::active);
  event_.assign(n_, -1);
  sup_.resize(n_);
  for (std::size_t p = 0; p < n_; ++p) {
    sup_[p] = norm2({x_.data() + p * d_, static_cast<std::size_t>(d_)});
    if (!(sup_[p] <= radius2_)) {
      state_[p] = ParticleState::escaped;
      event_[p] = 0;
    }
  }
}

void EnsembleStepper::step(std::int64_t k) {
  const auto dw = noise_.increment(k);
  const double dt = noise_.dt();
  const std::size_t d = d_, m = m_;
  const bool milstein = scheme_ == Scheme::milstein_diag && !field_.constant_diffusion;
  const bool need_jet = track_ || milstein;
  std::vector<double> cvec(d);

  for (std::size_t p = 0; p < n_; ++p) {
    std::span<double> drift(drift_.data() + p * d, d), diff(diff_.data() + p * d * m, d * m);
    auto zero = [&] {
      std::fill(drift.begin(), drift.end(), 0.0);
      std::fill(diff.begin(), diff.end(), 0.0);
      if (track_) {
        rate_[p] = 0.0;
        std::fill(coef_.begin() + p * m, coef_.begin() + (p + 1) * m, 0.0);
      }
      if (milstein) std::fill(corr_.begin() + p * d, corr_.begin() + (p + 1) * d, 0.0);
    };
    if (state_[p] != ParticleState::active) {
      zero();
      continue;
    }
    const std::span<const double> xp(x_.data() + p * d, d);
    if (field_.near_singularity(xp)) {
      state_[p] = ParticleState::singular_hit;
      event_[p] = k;
      zero();
      continue;
    }
    if (need_jet) {
      jet_.evaluate(field_, xp, LocalJet::first);
      std::copy(jet_.b.begin(), jet_.b.end(), drift.begin());
      std::copy(jet_.sigma.begin(), jet_.sigma.end(), diff.begin());
      if (track_) {
        rate_[p] = jet_.div_b() - 0.5 * jet_.sigma_grad_contraction();
        jet_.div_sigma({coef_.data() + p * m, m});
      }
      if (milstein) {
        for (std::size_t i = 0; i < d; ++i) {
          double c = 0.0;
          for (std::size_t l = 0; l < m; ++l) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += jet_.sigma[j * m + l] * jet_.grad_sigma[(i * m + l) * d + j];
            c += 0.5 * s * (dw[l] * dw[l] - dt);
          }
          corr_[p * d + i] = c;
        }
      }
    } else {
      field_.drift(xp, drift);
      field_.diffusion(xp, diff);
    }
    bool finite = true;
    for (double v : drift) finite = finite && std::isfinite(v);
    for (double v : diff) finite = finite && std::isfinite(v);
    if (!finite) {
      state_[p] = ParticleState::singular_hit;
      event_[p] = k;
      zero();
    }
  }

  if (track_) kernels::log_density_step({log_rho_.data(), rate_.data(), coef_.data(), dw.data(), dt, n_, m_});
  kernels::euler_step({x_.data(), drift_.data(), diff_.data(), dw.data(), dt, n_, d_, m_});
  if (milstein)
    for (std::size_t j = 0; j < n_ * d; ++j) x_[j] = x_[j] + corr_[j];

  for (std::size_t p = 0; p < n_; ++p) {
    if (state_[p] != ParticleState::active) continue;
    const double r2 = norm2({x_.data() + p * d, d});
    sup_[p] = std::max(sup_[p], r2);
    if (!(r2 <= radius2_)) {
      state_[p] = ParticleState::escaped;
      event_[p] = k + 1;
    }
  }
}

// ---------------------------------------------------------------------------------

double default_escape_radius(const PointSet& initial) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < initial.size(); ++i) r2 = std::max(r2, norm2(initial.point(i)));
  return r2 > 0.0 ? 10.0 * std::sqrt(r2) : 10.0;
}

namespace {

constexpr std::size_t kBlock = 256;

}  // namespace

FlowEnsemble integrate_forward(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise,
                               const PointSet& initial, const FlowOptions& options) {
  if (!noise) throw ValidationError("noise", "missing bundle");
  if (initial.dim != field.dim()) throw ValidationError("grid.d", "initial points do not match the field dimension");
  const std::int64_t steps = options.steps < 0 ? noise->steps() : options.steps;
  if (steps > noise->steps()) throw ValidationError("steps", "requested steps exceed the bundle horizon");
  if (options.save_every < 0) throw ValidationError("save_every", "must be >= 0");

  FlowEnsemble ens;
  ens.d = field.dim();
  ens.m = field.noise_dim();
  ens.initial = initial;
  ens.noise = noise;
  ens.field_name = field.name();
  ens.scheme = options.scheme;
  ens.steps = steps;
  ens.escape_radius = options.escape_radius > 0.0 ? options.escape_radius : default_escape_radius(initial);

  std::vector<std::int64_t> saves{0, steps};
  if (options.save_every > 0)
    for (std::int64_t k = options.save_every; k < steps; k += options.save_every) saves.push_back(k);
  for (auto k : options.save_steps) {
    if (k < 0 || k > steps) throw ValidationError("save_steps", "snapshot step outside [0, steps]");
    saves.push_back(k);
  }
  std::sort(saves.begin(), saves.end());
  saves.erase(std::unique(saves.begin(), saves.end()), saves.end());
  ens.save_steps = saves;

  const std::size_t n = initial.size();
  const std::size_t d = ens.d;
  ens.positions.assign(saves.size(), std::vector<double>(n * d));
  if (options.track_density) ens.log_rho.assign(saves.size(), std::vector<double>(n));
  ens.state.assign(n, ParticleState::active);
  ens.event_step.assign(n, -1);
  ens.sup_norm2.assign(n, 0.0);

  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, options.workers, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const std::size_t p0 = b * kBlock, p1 = std::min(n, p0 + kBlock);
      EnsembleStepper stepper(field, *noise, {initial.coords.data() + p0 * d, (p1 - p0) * d}, options.scheme,
                              ens.escape_radius, options.track_density);
      std::size_t snap = 0;
      auto save = [&] {
        const auto x = stepper.positions();
        std::copy(x.begin(), x.end(), ens.positions[snap].begin() + p0 * d);
        if (options.track_density) {
          const auto lr = stepper.log_rho();
          std::copy(lr.begin(), lr.end(), ens.log_rho[snap].begin() + p0);
        }
        ++snap;
      };
      save();
      for (std::int64_t k = 0; k < steps; ++k) {
        stepper.step(k);
        if (snap < saves.size() && saves[snap] == k + 1) save();
      }
      for (std::size_t p = p0; p < p1; ++p) {
        ens.state[p] = stepper.state()[p - p0];
        ens.event_step[p] = stepper.event_step()[p - p0];
        ens.sup_norm2[p] = stepper.sup_norm2()[p - p0];
      }
    }
  });
  return ens;
}

FlowEnsemble integrate_inverse(FieldPtr field, std::shared_ptr<const NoiseBundle> noise, double horizon,
                               const PointSet& initial, FlowOptions options) {
  if (!noise) throw ValidationError("noise", "missing bundle");
  const std::int64_t k = noise->grid().index_of(horizon);
  if (k > noise->steps()) throw ValidationError("T", "horizon exceeds the bundle");
  auto reversed = std::make_shared<const NoiseBundle>(reverse(truncate(*noise, k), static_cast<double>(k) * noise->dt()));
  const auto inv = inverse_flow_field(field);
  options.steps = k;
  return integrate_forward(*inv, reversed, initial, options);
}

CocycleReport check_cocycle(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise, double s,
                            double t, const PointSet& grid, FlowOptions options) {
  CocycleReport rep;
  rep.s_steps = noise->grid().index_of(s);
  rep.t_steps = noise->grid().index_of(t);
  if (rep.s_steps + rep.t_steps > noise->steps()) throw ValidationError("cocycle", "s + t exceeds the bundle horizon");
  if (options.escape_radius <= 0.0) options.escape_radius = default_escape_radius(grid);
  options.track_density = false;
  options.save_every = 0;
  options.save_steps = {rep.s_steps};
  options.steps = rep.s_steps + rep.t_steps;
  const auto left = integrate_forward(field, noise, grid, options);

  PointSet mid = grid;
  mid.coords = left.positions[left.snapshot_of(rep.s_steps)];
  auto shifted = std::make_shared<const NoiseBundle>(shift_steps(*noise, rep.s_steps));
  options.save_steps.clear();
  options.steps = rep.t_steps;
  const auto right = integrate_forward(field, shifted, mid, options);

  for (std::size_t p = 0; p < grid.size(); ++p) {
    if (left.frozen(p) || right.frozen(p)) {
      ++rep.excluded_frozen;
      continue;
    }
    ++rep.compared;
    const auto a = left.final_position(p), b = right.final_position(p);
    double diff = 0.0;
    for (int i = 0; i < left.d; ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    rep.max_abs_discrepancy = std::max(rep.max_abs_discrepancy, diff);
    rep.max_rel_discrepancy = std::max(rep.max_rel_discrepancy, diff / std::max(1.0, std::sqrt(norm2(a))));
  }
  rep.message = std::to_string(rep.compared) + " particles compared";
  if (rep.excluded_frozen > 0)
    rep.message += ", " + std::to_string(rep.excluded_frozen) + " frozen particles excluded";
  return rep;
}

SemigroupEstimate estimate_semigroup(const CoefficientField& field, const std::vector<std::uint64_t>& seeds,
                                     double t, double dt, const ScalarFn& phi, const PointSet& grid,
                                     FlowOptions options) {
  if (seeds.size() < 2) throw ValidationError("seeds", "need at least two seeds");
  const TimeGrid tg = TimeGrid::from_horizon(t, dt);
  const std::size_t n = grid.size();
  std::vector<double> sum(n, 0.0), sum2(n, 0.0);
  options.steps = -1;
  options.save_every = 0;
  options.save_steps.clear();
  if (options.escape_radius <= 0.0) options.escape_radius = default_escape_radius(grid);
  for (auto seed : seeds) {
    auto noise = std::make_shared<const NoiseBundle>(generate(seed, field.noise_dim(), tg, options.workers));
    const auto ens = integrate_forward(field, noise, grid, options);
    for (std::size_t p = 0; p < n; ++p) {
      const double v = phi(ens.final_position(p));
      sum[p] += v;
      sum2[p] += v * v;
    }
  }
  SemigroupEstimate est;
  est.seeds = seeds.size();
  const double s = static_cast<double>(seeds.size());
  est.mean.resize(n);
  est.standard_error.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    est.mean[p] = sum[p] / s;
    const double var = std::max(0.0, (sum2[p] - s * est.mean[p] * est.mean[p]) / (s - 1.0));
    est.standard_error[p] = std::sqrt(var / s);
  }
  return est;
}

}  // namespace aeflow
