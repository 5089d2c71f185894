#include "aeflow/invariant.hpp"

#include <algorithm>
#include <cmath>

#include "aeflow/density.hpp"
#include "aeflow/parallel.hpp"
#include "aeflow/quadrature.hpp"
#include "aeflow/rng.hpp"
#include "json.hpp"

namespace aeflow {

double Box::volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < lower.size(); ++a) v *= upper[a] - lower[a];
  return v;
}

double OccupationMeasure::bin_volume() const { return std::pow(histogram.bin_width, histogram.box.dim()); }

std::vector<double> OccupationMeasure::bin_center(std::size_t b) const {
  const int d = histogram.box.dim();
  std::vector<double> c(d);
  for (int a = d - 1; a >= 0; --a) {
    const auto i = b % static_cast<std::size_t>(bins_per_axis[a]);
    b /= static_cast<std::size_t>(bins_per_axis[a]);
    c[a] = histogram.box.lower[a] + (static_cast<double>(i) + 0.5) * histogram.bin_width;
  }
  return c;
}

double OccupationMeasure::gamma_hat_sup() const {
  double s = 0.0;
  for (std::size_t b = 0; b < counts.size(); ++b) s = std::max(s, density(b));
  return s;
}

double OccupationMeasure::total_mass() const {
  std::uint64_t c = 0;
  for (auto v : counts) c += v;
  return static_cast<double>(c) / static_cast<double>(samples);
}

std::string OccupationMeasure::to_json() const {
  nlohmann::ordered_json j;
  j["horizon"] = horizon;
  j["burn_in"] = burn_in;
  j["bin_width"] = histogram.bin_width;
  auto& bins = j["bins"] = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] == 0) continue;
    bins.push_back({{"center", bin_center(b)}, {"mass", mass(b)}, {"density", density(b)}});
  }
  j["gamma_hat_sup"] = gamma_hat_sup();
  j["escaped_mass"] = escaped_mass();
  j["outside_mass"] = static_cast<double>(outside_samples) / static_cast<double>(samples);
  j["moment2"] = moment2();
  j["gamma0_sup"] = gamma0_sup;
  j["K_hat"] = k_hat;
  j["density_bound"] = density_bound;
  j["density_bound_holds"] = density_bound_holds;
  j["seeds"] = seeds;
  j["warnings"] = warnings;
  return j.dump(2);
}

CsvTable OccupationMeasure::table() const {
  const int d = histogram.box.dim();
  std::vector<std::string> header{"bin"};
  for (int a = 0; a < d; ++a) header.push_back("c" + std::to_string(a));
  header.insert(header.end(), {"count", "mass", "density"});
  CsvTable t(header);
  for (std::size_t b = 0; b < counts.size(); ++b) {
    t.row().add(b);
    for (double c : bin_center(b)) t.add(c);
    t.add(static_cast<long long>(counts[b])).add(mass(b)).add(density(b));
  }
  return t;
}

OccupationMeasure merge(const OccupationMeasure& a, const OccupationMeasure& b) {
  if (a.bins_per_axis != b.bins_per_axis || a.histogram.bin_width != b.histogram.bin_width ||
      a.histogram.box.lower != b.histogram.box.lower)
    throw ValidationError("merge", "histograms differ");
  if (a.samples != b.samples) throw ValidationError("merge", "windows must have equal length");
  if (a.seed_counts.size() != b.seed_counts.size()) throw ValidationError("merge", "seed counts differ");
  OccupationMeasure m = a;
  m.burn_in = std::min(a.burn_in, b.burn_in);
  m.horizon = std::max(a.horizon, b.horizon);
  for (std::size_t i = 0; i < m.counts.size(); ++i) m.counts[i] += b.counts[i];
  for (std::size_t s = 0; s < m.seed_counts.size(); ++s)
    for (std::size_t i = 0; i < m.counts.size(); ++i) m.seed_counts[s][i] += b.seed_counts[s][i];
  m.samples += b.samples;
  m.escaped_samples += b.escaped_samples;
  m.outside_samples += b.outside_samples;
  m.moment2_sum += b.moment2_sum;
  m.active_samples += b.active_samples;
  m.k_hat = std::max(a.k_hat, b.k_hat);
  m.density_bound = std::max(a.density_bound, b.density_bound);
  m.density_bound_holds = m.gamma_hat_sup() <= m.density_bound;
  return m;
}

double coercivity_moment_envelope(double c1, double c2, double initial_moment2, double horizon) {
  if (!(c1 > 0.0)) throw ValidationError("C1", "the envelope needs C1 > 0");
  return initial_moment2 / (c1 * horizon) + c2 / c1;
}

double certified_compression(const CoefficientField& field, const PointSet& grid, double horizon) {
  const auto rep = check_en3(field, grid);
  if (rep.positive_part > 1e-9)
    throw ValidationError("invariant.density_constant",
                          "certified constant exp(C1 T) with C1 = " + format_double(rep.positive_part) +
                              " > 0 grows with T; no T-uniform density bound is available, use the empirical K_hat");
  return std::exp(rep.positive_part * horizon);
}

namespace {

struct Accumulator {
  std::vector<std::uint64_t> counts;
  std::uint64_t escaped = 0, outside = 0, active = 0;
  double m2 = 0.0;
};

std::int64_t bins_along(double lower, double upper, double width, const char* what) {
  const double n = (upper - lower) / width;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-9 * r) throw ValidationError(what, "box sides must be multiples of the bin width");
  return static_cast<std::int64_t>(r);
}

}  // namespace

std::vector<OccupationMeasure> krylov_bogoliubov(const CoefficientField& field, const std::vector<std::uint64_t>& seeds,
                                                 const Box& gamma0, const HistogramSpec& hist,
                                                 const KrylovOptions& opt) {
  const int d = field.dim(), m = field.noise_dim();
  if (seeds.empty()) throw ValidationError("seeds", "need at least one seed");
  if (gamma0.dim() != d || hist.box.dim() != d) throw ValidationError("gamma0.box", "dimension mismatch");
  if (opt.horizons.empty()) throw ValidationError("horizons", "need at least one horizon");
  for (std::size_t i = 0; i < opt.horizons.size(); ++i)
    if (opt.horizons[i] <= (i == 0 ? opt.burn_in : opt.horizons[i - 1]))
      throw ValidationError("horizons", "must be strictly increasing and exceed burn_in");
  if (!(hist.bin_width > 0.0)) throw ValidationError("histogram.bin_width", "must be > 0");

  const TimeGrid tg = TimeGrid::from_horizon(opt.horizons.back(), opt.dt);
  const std::int64_t kb = tg.index_of(opt.burn_in);
  std::vector<std::int64_t> ends;
  for (double h : opt.horizons) ends.push_back(tg.index_of(h));
  const std::size_t windows = ends.size();

  std::vector<std::int64_t> bins_axis(d);
  std::size_t nbins = 1;
  for (int a = 0; a < d; ++a) {
    bins_axis[a] = bins_along(hist.box.lower[a], hist.box.upper[a], hist.bin_width, "histogram.box");
    nbins *= static_cast<std::size_t>(bins_axis[a]);
  }

  const Lattice lat0 = Lattice::box(gamma0.lower, gamma0.upper, opt.per_axis);
  const PointSet start = lattice_points(lat0);
  const std::size_t np = start.size();

  std::vector<std::string> warnings;
  {
    const Lattice probe = Lattice::box(hist.box.lower, hist.box.upper, 16);
    const auto co = check_coercivity(field, lattice_points(probe));
    if (!co.holds) warnings.push_back("coercivity check failed on the histogram box; tightness is not guaranteed");
  }
  double certified = 0.0;
  if (opt.density_constant == DensityConstant::certified) {
    const Lattice probe = Lattice::box(hist.box.lower, hist.box.upper, 16);
    certified = certified_compression(field, lattice_points(probe), opt.horizons.back());
  }

  FlowOptions fo = opt.flow;
  const double radius = fo.escape_radius > 0.0 ? fo.escape_radius : default_escape_radius(start);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (np + kBlock - 1) / kBlock;

  // acc[seed][window]
  std::vector<std::vector<Accumulator>> acc(seeds.size(), std::vector<Accumulator>(windows));
  for (auto& per_seed : acc)
    for (auto& a : per_seed) a.counts.assign(nbins, 0);

  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const std::uint64_t seed = seeds[si];
    std::shared_ptr<const NoiseBundle> shared;
    if (!opt.independent_paths) shared = std::make_shared<const NoiseBundle>(generate(seed, m, tg, fo.workers));
    std::vector<std::vector<Accumulator>> block_acc(blocks, std::vector<Accumulator>(windows));
    parallel_for(blocks, fo.workers, [&](std::size_t b0, std::size_t b1) {
      std::vector<std::int64_t> idx(d);
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t p0 = b * kBlock, p1 = std::min(np, p0 + kBlock);
        auto& local = block_acc[b];
        for (auto& a : local) a.counts.assign(nbins, 0);
        std::vector<NoiseBundle> own;
        std::vector<EnsembleStepper> steppers;
        if (opt.independent_paths) {
          own.reserve(p1 - p0);
          steppers.reserve(p1 - p0);
          for (std::size_t p = p0; p < p1; ++p) {
            own.push_back(generate(derive_seed(seed, p), m, tg, 1));
            steppers.emplace_back(field, own.back(), start.point(p), fo.scheme, radius, false);
          }
        } else {
          steppers.emplace_back(field, *shared, std::span<const double>(start.coords.data() + p0 * d, (p1 - p0) * d),
                                fo.scheme, radius, false);
        }
        std::size_t w = 0;
        for (std::int64_t k = 0; k < ends.back(); ++k) {
          if (k >= kb) {
            while (k >= ends[w]) ++w;
            auto& a = local[w];
            for (auto& st : steppers) {
              const auto x = st.positions();
              for (std::size_t q = 0; q < st.size(); ++q) {
                if (st.state()[q] != ParticleState::active) {
                  ++a.escaped;
                  continue;
                }
                const auto y = x.subspan(q * d, d);
                ++a.active;
                a.m2 += norm2(y);
                bool inside = true;
                for (int c = 0; c < d && inside; ++c) {
                  const double u = (y[c] - hist.box.lower[c]) / hist.bin_width;
                  if (!(u >= 0.0) || u >= static_cast<double>(bins_axis[c])) {
                    inside = false;
                    break;
                  }
                  idx[c] = static_cast<std::int64_t>(u);
                }
                if (!inside) {
                  ++a.outside;
                  continue;
                }
                std::size_t flat = 0;
                for (int c = 0; c < d; ++c) flat = flat * static_cast<std::size_t>(bins_axis[c]) + idx[c];
                ++a.counts[flat];
              }
            }
          }
          for (auto& st : steppers) st.step(k);
        }
      }
    });
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t w = 0; w < windows; ++w) {
        auto& dst = acc[si][w];
        const auto& src = block_acc[b][w];
        for (std::size_t i = 0; i < nbins; ++i) dst.counts[i] += src.counts[i];
        dst.escaped += src.escaped;
        dst.outside += src.outside;
        dst.active += src.active;
        dst.m2 += src.m2;
      }
  }

  // Expected Lebesgue pushforward from the gamma_0 box, common noise per seed.
  MeasureEstimate compression;
  if (opt.density_constant == DensityConstant::empirical) {
    const std::int64_t every = tg.index_of(opt.compression_every);
    if (every < 1) throw ValidationError("compression_every", "must be at least one step");
    std::vector<FlowEnsemble> ens;
    ens.reserve(seeds.size());
    FlowOptions co = fo;
    co.escape_radius = radius;
    co.save_every = every;
    co.steps = ends.back();
    co.track_density = false;
    for (auto seed : seeds)
      ens.push_back(integrate_forward(field, std::make_shared<const NoiseBundle>(generate(seed, m, tg, fo.workers)),
                                      start, co));
    std::vector<const FlowEnsemble*> ptrs;
    for (const auto& e : ens) ptrs.push_back(&e);
    compression = estimate_compression(ptrs, hist.bin_width);
  }

  std::vector<OccupationMeasure> out;
  OccupationMeasure running;
  running.histogram = hist;
  running.bins_per_axis = bins_axis;
  running.counts.assign(nbins, 0);
  running.seed_counts.assign(seeds.size(), std::vector<std::uint64_t>(nbins, 0));
  running.dt = opt.dt;
  running.burn_in = opt.burn_in;
  running.gamma0_sup = 1.0 / gamma0.volume();
  running.seeds = seeds.size();
  running.warnings = warnings;
  std::int64_t prev = kb;
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& a = acc[si][w];
      for (std::size_t i = 0; i < nbins; ++i) {
        running.counts[i] += a.counts[i];
        running.seed_counts[si][i] += a.counts[i];
      }
      running.escaped_samples += a.escaped;
      running.outside_samples += a.outside;
      running.active_samples += a.active;
      running.moment2_sum += a.m2;
    }
    running.samples += static_cast<std::uint64_t>(ends[w] - prev) * np * seeds.size();
    prev = ends[w];
    running.horizon = opt.horizons[w];
    if (opt.density_constant == DensityConstant::certified) {
      running.k_hat = certified;
    } else {
      double k = 0.0;
      for (const auto& s : compression.snapshots)
        if (s.time <= opt.horizons[w] + 1e-12) k = std::max(k, s.sup_density);
      running.k_hat = k;
    }
    running.density_bound = running.gamma0_sup * running.k_hat * (1.0 + opt.binning_tolerance);
    running.density_bound_holds = running.gamma_hat_sup() <= running.density_bound;
    if (running.escaped_mass() > opt.max_escaped_mass)
      throw CheckFailed("krylov_bogoliubov: escaped mass " + format_double(running.escaped_mass()) +
                        " exceeds " + format_double(opt.max_escaped_mass) + " at horizon " +
                        format_double(running.horizon));
    out.push_back(running);
  }
  return out;
}

namespace {

// Average of f over bin b by a tensor Gauss–Legendre rule of order q.
double bin_average(const OccupationMeasure& mu, std::size_t b, const ScalarFn& f, int q = 6) {
  const auto [gx, gw] = gauss_legendre(q);
  const int d = mu.histogram.box.dim();
  const auto c = mu.bin_center(b);
  const double hw = 0.5 * mu.histogram.bin_width;
  std::vector<int> idx(d, 0);
  std::vector<double> x(d);
  double s = 0.0;
  while (true) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      x[a] = c[a] + hw * gx[idx[a]];
      w *= 0.5 * gw[idx[a]];
    }
    s += w * f(x);
    int a = d - 1;
    while (a >= 0 && ++idx[a] == q) idx[a--] = 0;
    if (a < 0) break;
  }
  return s;
}

}  // namespace

double sup_density_distance(const OccupationMeasure& mu, const ScalarFn& rho) {
  double s = 0.0;
  for (std::size_t b = 0; b < mu.bin_count(); ++b) s = std::max(s, std::abs(mu.density(b) - bin_average(mu, b, rho)));
  return s;
}

InvarianceReport check_invariance(const CoefficientField& field, const OccupationMeasure& mu, const FunctionBank& bank,
                                  double t, double dt, const std::vector<std::uint64_t>& seeds,
                                  std::size_t points_per_seed, FlowOptions options) {
  if (seeds.size() < 2) throw ValidationError("seeds", "need at least two seeds for an error estimate");
  if (points_per_seed == 0) throw ValidationError("points_per_seed", "must be >= 1");
  const int d = field.dim();
  if (mu.histogram.box.dim() != d) throw ValidationError("mu", "dimension mismatch");
  std::uint64_t total = 0;
  std::vector<std::uint64_t> cumulative(mu.counts.size());
  for (std::size_t b = 0; b < mu.counts.size(); ++b) cumulative[b] = (total += mu.counts[b]);
  if (total == 0) throw ValidationError("mu", "occupation measure has no binned mass");
  const double mass = mu.total_mass();

  InvarianceReport rep;
  rep.t = t;
  rep.seeds = seeds.size();
  rep.points_per_seed = points_per_seed;
  if (options.escape_radius <= 0.0) {
    double r = 0.0;
    for (int a = 0; a < d; ++a)
      r = std::max({r, std::abs(mu.histogram.box.lower[a]), std::abs(mu.histogram.box.upper[a])});
    options.escape_radius = 10.0 * r;
  }

  // Fresh mu_hat-distributed points per seed.
  std::vector<PointSet> points(seeds.size());
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    auto& ps = points[si];
    ps.dim = d;
    ps.coords.resize(points_per_seed * d);
    const std::uint64_t key = derive_seed(seeds[si], 0x1A7A0000ull);
    for (std::size_t j = 0; j < points_per_seed; ++j) {
      const auto u = uniform_pair(key, j, 0, 0);
      const auto target = static_cast<std::uint64_t>(u[0] * static_cast<double>(total));
      const auto b = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), target) -
                                              cumulative.begin());
      const auto c = mu.bin_center(std::min(b, mu.counts.size() - 1));
      for (int a = 0; a < d; ++a) {
        const auto v = uniform_pair(key, j, 1 + static_cast<std::uint32_t>(a), 0);
        ps.coords[j * d + a] = c[a] + (v[0] - 0.5) * mu.histogram.bin_width;
      }
    }
  }

  // One path per seed; every test function reuses the same endpoints for the paired difference.
  std::vector<std::vector<double>> endpoints(seeds.size());
  {
    const TimeGrid tg = TimeGrid::from_horizon(t, dt);
    options.steps = -1;
    options.save_every = 0;
    options.save_steps.clear();
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      auto noise = std::make_shared<const NoiseBundle>(generate(seeds[si], field.noise_dim(), tg, options.workers));
      const auto ens = integrate_forward(field, noise, points[si], options);
      endpoints[si].resize(points_per_seed * d);
      for (std::size_t j = 0; j < points_per_seed; ++j) {
        const auto y = ens.final_position(j);
        std::copy(y.begin(), y.end(), endpoints[si].begin() + static_cast<std::ptrdiff_t>(j * d));
      }
    }
  }

  for (const auto& phi : bank) {
    InvarianceRow row;
    row.function = phi.name;
    double centre = 0.0;
    for (std::size_t b = 0; b < mu.counts.size(); ++b) {
      if (mu.counts[b] == 0) continue;
      row.measure_side += mu.mass(b) * bin_average(mu, b, phi.value);
      centre += mu.mass(b) * phi.value(mu.bin_center(b));
    }
    row.binning_error = std::abs(row.measure_side - centre);

    // Per-seed mu_hat integrals.
    std::vector<double> per_seed;
    const double seed_samples = static_cast<double>(mu.samples) / static_cast<double>(mu.seed_counts.size());
    for (const auto& sc : mu.seed_counts) {
      double s = 0.0;
      for (std::size_t b = 0; b < sc.size(); ++b)
        if (sc[b]) s += static_cast<double>(sc[b]) / seed_samples * bin_average(mu, b, phi.value);
      per_seed.push_back(s);
    }
    auto mean_se = [](const std::vector<double>& v) {
      const double n = static_cast<double>(v.size());
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= n;
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      return std::pair{mean, n > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0};
    };
    row.measure_error = mu.seed_counts.size() > 1 ? mean_se(per_seed).second : 0.0;

    std::vector<double> diffs;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      double a = 0.0, b = 0.0;
      for (std::size_t j = 0; j < points_per_seed; ++j) {
        a += phi.value(std::span<const double>(&endpoints[si][j * d], d));
        b += phi.value(points[si].point(j));
      }
      diffs.push_back((a - b) / static_cast<double>(points_per_seed));
    }
    const auto [dmean, dse] = mean_se(diffs);
    row.discrepancy = mass * std::abs(dmean);
    row.semigroup_side = row.measure_side + mass * dmean;
    row.monte_carlo_error = mass * dse;
    row.combined_error = std::sqrt(row.monte_carlo_error * row.monte_carlo_error +
                                   row.measure_error * row.measure_error + row.binning_error * row.binning_error);
    row.within = row.discrepancy == 0.0 || row.discrepancy <= 3.0 * row.combined_error;
    rep.holds = rep.holds && row.within;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace aeflow
