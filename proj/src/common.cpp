#include "aeflow/common.hpp"

#include <atomic>
#include <thread>

#include "aeflow/parallel.hpp"
#include "aeflow/rng.hpp"

namespace aeflow {

namespace {
std::atomic<int> g_default_workers{0};
}

int hardware_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int default_workers() {
  const int w = g_default_workers.load();
  return w > 0 ? w : hardware_workers();
}

void set_default_workers(int workers) { g_default_workers.store(workers); }

Lattice Lattice::cube(int dim, double half_width, std::int64_t per_axis) {
  return box(std::vector<double>(dim, -half_width), std::vector<double>(dim, half_width), per_axis);
}

Lattice Lattice::box(std::vector<double> lower, std::vector<double> upper, std::int64_t per_axis) {
  if (lower.empty() || lower.size() != upper.size()) throw ValidationError("lattice.box", "dimension mismatch");
  if (per_axis < 1) throw ValidationError("lattice.per_axis", "must be >= 1");
  Lattice l;
  l.dim = static_cast<int>(lower.size());
  l.spacing = (upper[0] - lower[0]) / static_cast<double>(per_axis);
  if (!(l.spacing > 0.0)) throw ValidationError("lattice.box", "upper must exceed lower");
  l.counts.assign(l.dim, per_axis);
  for (int a = 1; a < l.dim; ++a) {
    const double n = (upper[a] - lower[a]) / l.spacing;
    const double r = std::round(n);
    if (r < 1.0 || std::abs(n - r) > 1e-9 * r)
      throw ValidationError("lattice.box", "box sides must be integer multiples of the spacing");
    l.counts[a] = static_cast<std::int64_t>(r);
  }
  l.lower = std::move(lower);
  return l;
}

std::size_t Lattice::size() const {
  std::size_t n = 1;
  for (auto c : counts) n *= static_cast<std::size_t>(c);
  return n;
}

std::size_t Lattice::stride(int axis) const {
  std::size_t s = 1;
  for (int a = dim - 1; a > axis; --a) s *= static_cast<std::size_t>(counts[a]);
  return s;
}

void Lattice::unflatten(std::size_t flat, std::span<std::int64_t> idx) const {
  for (int a = dim - 1; a >= 0; --a) {
    idx[a] = static_cast<std::int64_t>(flat % static_cast<std::size_t>(counts[a]));
    flat /= static_cast<std::size_t>(counts[a]);
  }
}

std::size_t Lattice::flatten(std::span<const std::int64_t> idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < dim; ++a) flat = flat * static_cast<std::size_t>(counts[a]) + static_cast<std::size_t>(idx[a]);
  return flat;
}

void Lattice::node(std::size_t flat, std::span<double> out) const {
  for (int a = dim - 1; a >= 0; --a) {
    const auto i = flat % static_cast<std::size_t>(counts[a]);
    flat /= static_cast<std::size_t>(counts[a]);
    out[a] = lower[a] + (static_cast<double>(i) + 0.5) * spacing;
  }
}

std::vector<double> Lattice::node(std::size_t flat) const {
  std::vector<double> x(dim);
  node(flat, x);
  return x;
}

PointSet lattice_points(const Lattice& lattice, double exclude_radius, std::span<const double> center) {
  PointSet ps;
  ps.dim = lattice.dim;
  ps.cell_mass = lattice.cell_volume();
  ps.lattice_lower = lattice.lower;
  ps.lattice_spacing = lattice.spacing;
  std::vector<double> x(lattice.dim);
  const double r2 = exclude_radius * exclude_radius;
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    lattice.node(i, x);
    double dist2 = 0.0;
    for (int a = 0; a < lattice.dim; ++a) {
      const double c = center.empty() ? 0.0 : center[a];
      dist2 += (x[a] - c) * (x[a] - c);
    }
    if (exclude_radius > 0.0 && dist2 < r2) continue;
    ps.coords.insert(ps.coords.end(), x.begin(), x.end());
  }
  return ps;
}

PointSet restrict_to_shell(const PointSet& points, double r_in, double r_out) {
  PointSet out = points;
  out.coords.clear();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double r = std::sqrt(norm2(points.point(i)));
    if (r >= r_in && r <= r_out) out.coords.insert(out.coords.end(), points.point(i).begin(), points.point(i).end());
  }
  return out;
}

PointSet sample_shell(int dim, double r_in, double r_out, std::size_t count, std::uint64_t seed) {
  if (dim < 1 || !(r_out > r_in) || r_in < 0.0) throw ValidationError("sample_shell", "bad shell");
  PointSet ps;
  ps.dim = dim;
  ps.coords.resize(count * static_cast<std::size_t>(dim));
  const double vin = std::pow(r_in, dim), vout = std::pow(r_out, dim);
  for (std::size_t i = 0; i < count; ++i) {
    double n2 = 0.0;
    auto p = ps.point(i);
    for (int a = 0; a < dim; a += 2) {
      const auto z = normal_pair(seed, i, static_cast<std::uint32_t>(a / 2), 7u);
      p[a] = z[0];
      if (a + 1 < dim) p[a + 1] = z[1];
    }
    for (double v : p) n2 += v * v;
    const double u = uniform_pair(seed, i, 0u, 8u)[0];
    const double r = std::pow(vin + u * (vout - vin), 1.0 / dim);
    const double s = r / std::sqrt(n2);
    for (double& v : p) v *= s;
  }
  ps.cell_mass = (ball_volume(dim, r_out) - ball_volume(dim, r_in)) / static_cast<double>(count);
  return ps;
}

}  // namespace aeflow
