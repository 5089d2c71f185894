#include "aeflow/maximal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "aeflow/kernels.hpp"
#include "aeflow/parallel.hpp"
#include "aeflow/rng.hpp"

namespace aeflow {

GridFunction GridFunction::sample(const Lattice& lattice, const std::function<double(std::span<const double>)>& f) {
  GridFunction g{lattice, std::vector<double>(lattice.size())};
  std::vector<double> x(lattice.dim);
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    lattice.node(i, x);
    g.values[i] = f(x);
  }
  return g;
}

CsvTable GridFunction::table() const {
  std::vector<std::string> header;
  for (int a = 0; a < lattice.dim; ++a) header.push_back("x" + std::to_string(a));
  header.push_back("value");
  CsvTable t(std::move(header));
  std::vector<double> x(lattice.dim);
  for (std::size_t i = 0; i < size(); ++i) {
    lattice.node(i, x);
    t.row();
    for (double v : x) t.add(v);
    t.add(values[i]);
  }
  return t;
}

GridFunction GridFunction::read_csv(const std::filesystem::path& path, const Lattice& lattice) {
  std::ifstream in(path);
  if (!in) throw ValidationError("grid_function.path", "cannot open " + path.string());
  GridFunction g{lattice, {}};
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    g.values.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  }
  if (g.values.size() != lattice.size()) throw ValidationError("grid_function", "row count does not match the lattice");
  return g;
}

std::vector<double> radius_ladder(double h, double radius, int radii_per_octave) {
  if (radii_per_octave < 1) throw ValidationError("radii_per_octave", "must be >= 1");
  std::vector<double> r;
  for (int j = 1;; ++j) {
    const double v = h * std::exp2(static_cast<double>(j) / radii_per_octave);
    if (v > radius * (1.0 + 1e-12)) break;
    r.push_back(v);
  }
  return r;
}

namespace {

struct BallStencil {
  std::vector<std::vector<std::int64_t>> vec;  // integer offsets sorted by length
  std::vector<std::ptrdiff_t> flat;
  std::vector<std::size_t> checkpoint_end;
  std::vector<double> node_count;
  std::int64_t reach = 0;
};

BallStencil make_stencil(const Lattice& lat, const std::vector<double>& radii) {
  BallStencil st;
  const int d = lat.dim;
  const double h = lat.spacing;
  const double rmax = radii.back() / h;
  st.reach = static_cast<std::int64_t>(std::floor(rmax * (1.0 + 1e-12)));
  const double lim = rmax * rmax * (1.0 + 1e-12);
  std::vector<std::int64_t> v(d, -st.reach);
  while (true) {
    std::int64_t n2 = 0;
    for (auto c : v) n2 += c * c;
    if (static_cast<double>(n2) <= lim) st.vec.push_back(v);
    int a = d - 1;
    while (a >= 0 && ++v[a] > st.reach) v[a--] = -st.reach;
    if (a < 0) break;
  }
  auto len2 = [](const std::vector<std::int64_t>& u) {
    std::int64_t s = 0;
    for (auto c : u) s += c * c;
    return s;
  };
  std::stable_sort(st.vec.begin(), st.vec.end(), [&](const auto& a, const auto& b) { return len2(a) < len2(b); });
  for (const auto& u : st.vec) {
    std::ptrdiff_t f = 0;
    for (int a = 0; a < d; ++a) f += static_cast<std::ptrdiff_t>(u[a]) * static_cast<std::ptrdiff_t>(lat.stride(a));
    st.flat.push_back(f);
  }
  st.checkpoint_end.push_back(1);
  for (double r : radii) {
    const double q = (r / h) * (r / h) * (1.0 + 1e-12);
    std::size_t end = 0;
    while (end < st.vec.size() && static_cast<double>(len2(st.vec[end])) <= q) ++end;
    st.checkpoint_end.push_back(end);
  }
  for (auto e : st.checkpoint_end) st.node_count.push_back(static_cast<double>(e));
  return st;
}

}  // namespace

MaximalResult maximal_function(const GridFunction& f, double radius, int radii_per_octave, int workers) {
  const Lattice& lat = f.lattice;
  const int d = lat.dim;
  const double h = lat.spacing;
  if (!(radius > h)) throw ValidationError("R", "radius must exceed the lattice spacing");
  MaximalResult res;
  res.radii = radius_ladder(h, radius, radii_per_octave);
  if (res.radii.size() < 8)
    throw ValidationError("radii_per_octave", "fewer than 8 radii in (h, R]; increase radii_per_octave");
  const BallStencil st = make_stencil(lat, res.radii);

  std::vector<double> absf(f.values.size());
  for (std::size_t i = 0; i < absf.size(); ++i) absf[i] = std::abs(f.values[i]);
  res.value = GridFunction{lat, std::vector<double>(absf.size(), 0.0)};
  res.boundary_incomplete.assign(absf.size(), 0);

  const std::int64_t nlast = lat.counts[d - 1];
  const std::size_t rows = lat.size() / static_cast<std::size_t>(nlast);
  const std::int64_t K = st.reach;

  parallel_for(rows, workers, [&](std::size_t r0, std::size_t r1) {
    std::vector<std::int64_t> idx(d), j(d);
    for (std::size_t row = r0; row < r1; ++row) {
      const std::size_t start = row * static_cast<std::size_t>(nlast);
      lat.unflatten(start, idx);
      bool inner = true;
      for (int a = 0; a < d - 1; ++a) inner = inner && idx[a] >= K && idx[a] + K < lat.counts[a];
      std::int64_t lo = nlast, hi = nlast;
      if (inner && nlast > 2 * K) {
        lo = K;
        hi = nlast - K;
        kernels::ball_max({absf.data() + start + lo, st.flat, std::span(st.checkpoint_end).subspan(0),
                           st.node_count, static_cast<std::size_t>(hi - lo), res.value.values.data() + start + lo});
      }
      for (std::int64_t c = 0; c < nlast; ++c) {
        if (c >= lo && c < hi) continue;
        idx[d - 1] = c;
        const std::size_t node = start + static_cast<std::size_t>(c);
        res.boundary_incomplete[node] = 1;
        double sum = 0.0, best = 0.0, cnt = 0.0;
        std::size_t o = 0;
        for (std::size_t cp = 0; cp < st.checkpoint_end.size(); ++cp) {
          for (; o < st.checkpoint_end[cp]; ++o) {
            bool inside = true;
            for (int a = 0; a < d; ++a) {
              j[a] = idx[a] + st.vec[o][a];
              inside = inside && j[a] >= 0 && j[a] < lat.counts[a];
            }
            if (!inside) continue;
            sum = sum + absf[lat.flatten(j)];
            cnt += 1.0;
          }
          best = std::max(best, sum / cnt);
        }
        res.value.values[node] = best;
      }
    }
  });
  return res;
}

GridFunction gradient_norm(const GridFunction& f) {
  const Lattice& lat = f.lattice;
  const int d = lat.dim;
  GridFunction g{lat, std::vector<double>(f.size())};
  std::vector<std::int64_t> idx(d);
  for (std::size_t i = 0; i < f.size(); ++i) {
    lat.unflatten(i, idx);
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
      const auto stride = lat.stride(a);
      double der;
      if (lat.counts[a] < 2) {
        der = 0.0;
      } else if (idx[a] == 0) {
        der = (f.values[i + stride] - f.values[i]) / lat.spacing;
      } else if (idx[a] == lat.counts[a] - 1) {
        der = (f.values[i] - f.values[i - stride]) / lat.spacing;
      } else {
        der = (f.values[i + stride] - f.values[i - stride]) / (2.0 * lat.spacing);
      }
      s += der * der;
    }
    g.values[i] = std::sqrt(s);
  }
  return g;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const Lattice& lat, double radius, std::size_t count,
                                                              std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const int d = lat.dim;
  std::vector<std::int64_t> a(d), b(d);
  const double reach = radius / lat.spacing;
  for (std::uint64_t attempt = 0; out.size() < count && attempt < 100 * count + 1000; ++attempt) {
    const auto u0 = uniform_pair(seed, attempt, 0, 11u);
    const std::size_t i = std::min(lat.size() - 1, static_cast<std::size_t>(u0[0] * static_cast<double>(lat.size())));
    lat.unflatten(i, a);
    bool ok = true;
    double n2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const auto u = uniform_pair(seed, attempt, static_cast<std::uint32_t>(k + 1), 11u);
      const auto off = static_cast<std::int64_t>(std::lround((2.0 * u[0] - 1.0) * reach));
      b[k] = a[k] + off;
      n2 += static_cast<double>(off * off);
      ok = ok && b[k] >= 0 && b[k] < lat.counts[k];
    }
    if (!ok || n2 == 0.0 || n2 > reach * reach) continue;
    out.emplace_back(i, lat.flatten(b));
  }
  return out;
}

namespace {

bool segment_near(std::span<const double> x, std::span<const double> y, const Singularity& s) {
  const std::size_t d = x.size();
  double num = 0.0, den = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    num += (s.center[a] - x[a]) * (y[a] - x[a]);
    den += (y[a] - x[a]) * (y[a] - x[a]);
  }
  const double t = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
  double dist2 = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    const double p = x[a] + t * (y[a] - x[a]) - s.center[a];
    dist2 += p * p;
  }
  const double lim = s.radius + kSingularityTolerance;
  return dist2 <= lim * lim;
}

}  // namespace

MorreyReport check_morrey_pointwise(const GridFunction& f, const GridFunction& grad_norm, double q, double radius,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    const std::vector<Singularity>& singularities, int radii_per_octave) {
  if (!(q >= 1.0)) throw ValidationError("q", "must be >= 1");
  GridFunction gq = grad_norm;
  for (auto& v : gq.values) v = std::pow(std::abs(v), q);
  const auto mq = maximal_function(gq, radius, radii_per_octave);
  const auto m1 = maximal_function(grad_norm, radius, radii_per_octave);
  MorreyReport rep;
  rep.finite = true;
  const Lattice& lat = f.lattice;
  for (const auto& [i, j] : pairs) {
    const auto x = lat.node(i), y = lat.node(j);
    double dist2 = 0.0;
    for (int a = 0; a < lat.dim; ++a) dist2 += (x[a] - y[a]) * (x[a] - y[a]);
    const double dist = std::sqrt(dist2);
    bool skip = dist == 0.0 || dist > radius * (1.0 + 1e-12) || mq.boundary_incomplete[i] || mq.boundary_incomplete[j];
    for (const auto& s : singularities) skip = skip || segment_near(x, y, s);
    if (skip) {
      ++rep.pairs_excluded;
      continue;
    }
    ++rep.pairs_used;
    const double diff = std::abs(f.values[i] - f.values[j]);
    if (diff == 0.0) continue;
    const double den1 = dist * std::pow(mq.value.values[i], 1.0 / q);
    const double den2 = dist * (m1.value.values[i] + m1.value.values[j]);
    const double c1 = den1 > 0.0 ? diff / den1 : std::numeric_limits<double>::infinity();
    const double c2 = den2 > 0.0 ? diff / den2 : std::numeric_limits<double>::infinity();
    rep.c_morrey = std::max(rep.c_morrey, c1);
    rep.c_two_point = std::max(rep.c_two_point, c2);
  }
  rep.finite = std::isfinite(rep.c_morrey) && std::isfinite(rep.c_two_point);
  return rep;
}

namespace {

void require_cover(const Lattice& lat, double r) {
  for (int a = 0; a < lat.dim; ++a)
    if (lat.lower[a] > -r + 1e-12 || lat.upper(a) < r - 1e-12)
      throw ValidationError("lattice", "f must be sampled on a box containing B_{N+R}");
}

// Lattice integral of g over nodes with |x| <= r.
template <class G>
double ball_sum(const Lattice& lat, double r, G&& g) {
  std::vector<double> x(lat.dim);
  double s = 0.0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    lat.node(i, x);
    if (norm2(x) <= r * r * (1.0 + 1e-12)) s += g(i);
  }
  return s * lat.cell_volume();
}

}  // namespace

LlogLReport check_llogl_bound(const GridFunction& f, double n_radius, double radius, const std::vector<double>& lambdas,
                              int radii_per_octave) {
  require_cover(f.lattice, n_radius + radius);
  LlogLReport rep;
  for (double lam : lambdas) {
    GridFunction g = f;
    for (auto& v : g.values) v *= lam;
    const auto m = maximal_function(g, radius, radii_per_octave);
    LlogLRow row;
    row.lambda = lam;
    row.maximal_integral = ball_sum(f.lattice, n_radius, [&](std::size_t i) { return m.value.values[i]; });
    row.llogl_integral = ball_sum(f.lattice, n_radius + radius, [&](std::size_t i) {
      const double a = std::abs(g.values[i]);
      return a * std::log1p(a);
    });
    rep.rows.push_back(row);
  }
  std::vector<double> xs, ys;
  for (const auto& r : rep.rows) {
    xs.push_back(r.llogl_integral);
    ys.push_back(r.maximal_integral);
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n, my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  rep.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  rep.intercept = my - rep.slope * mx;
  rep.consistent = true;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& r : rep.rows) {
    if (!std::isfinite(r.maximal_integral) || !std::isfinite(r.llogl_integral)) rep.consistent = false;
    if (r.llogl_integral == 0.0) {
      if (r.maximal_integral != 0.0) rep.consistent = false;
      continue;
    }
    const double ratio = r.maximal_integral / r.llogl_integral;
    if (ratio > prev * (1.0 + 1e-9)) rep.consistent = false;
    prev = ratio;
  }
  return rep;
}

LpReport check_lp_bound(const GridFunction& f, double p, double n_radius, double radius,
                        const std::vector<double>& lambdas, int radii_per_octave) {
  if (!(p > 1.0)) throw ValidationError("p", "must be > 1");
  require_cover(f.lattice, n_radius + radius);
  LpReport rep;
  rep.p = p;
  rep.lambdas = lambdas;
  for (double lam : lambdas) {
    GridFunction g = f;
    for (auto& v : g.values) v *= lam;
    const auto m = maximal_function(g, radius, radii_per_octave);
    const double left = ball_sum(f.lattice, n_radius, [&](std::size_t i) { return std::pow(m.value.values[i], p); });
    const double right =
        ball_sum(f.lattice, n_radius + radius, [&](std::size_t i) { return std::pow(std::abs(g.values[i]), p); });
    rep.ratios.push_back(std::pow(left, 1.0 / p) / std::pow(right, 1.0 / p));
  }
  rep.bounded = true;
  for (double r : rep.ratios) {
    rep.bounded = rep.bounded && std::isfinite(r);
    rep.max_relative_spread = std::max(rep.max_relative_spread, std::abs(r - rep.ratios.front()) / rep.ratios.front());
  }
  return rep;
}

}  // namespace aeflow
