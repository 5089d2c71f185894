#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace aeflow {

/// Invalid input or configuration. `field()` names the offending parameter path.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A verification pipeline ran to completion and its asserted inequality failed.
class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derivative data was requested on (or within tolerance of) a declared singular point.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

inline double ball_volume(int d, double r) { return unit_ball_volume(d) * std::pow(r, d); }

/// Surface area of the unit sphere S^{d-1}.
inline double unit_sphere_area(int d) { return d * unit_ball_volume(d); }

/// Regular cell-centred lattice over an axis-aligned box: node i along axis a sits at
/// lower[a] + (i + 1/2) * spacing. Row-major, last axis fastest.
struct Lattice {
  int dim = 0;
  std::vector<double> lower;
  std::vector<std::int64_t> counts;
  double spacing = 0.0;

  static Lattice cube(int dim, double half_width, std::int64_t per_axis);
  static Lattice box(std::vector<double> lower, std::vector<double> upper, std::int64_t per_axis);

  std::size_t size() const;
  double cell_volume() const { return std::pow(spacing, dim); }
  double upper(int axis) const { return lower[axis] + spacing * static_cast<double>(counts[axis]); }
  void node(std::size_t flat, std::span<double> out) const;
  std::vector<double> node(std::size_t flat) const;
  void unflatten(std::size_t flat, std::span<std::int64_t> idx) const;
  std::size_t flatten(std::span<const std::int64_t> idx) const;
  std::size_t stride(int axis) const;
};

/// A finite set of points in R^d, each carrying Lebesgue mass `cell_mass`
/// (h^d for lattice-derived sets).
struct PointSet {
  int dim = 0;
  std::vector<double> coords;
  double cell_mass = 1.0;
  // Present when the points are (a subset of) a lattice; used for bin alignment.
  std::vector<double> lattice_lower;
  double lattice_spacing = 0.0;

  std::size_t size() const { return dim == 0 ? 0 : coords.size() / static_cast<std::size_t>(dim); }
  std::span<const double> point(std::size_t i) const {
    return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<double> point(std::size_t i) {
    return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  bool same_points(const PointSet& other) const {
    return dim == other.dim && coords == other.coords;
  }
};

/// All lattice nodes with |x - center| >= exclude_radius (center defaults to the origin).
PointSet lattice_points(const Lattice& lattice, double exclude_radius = 0.0,
                        std::span<const double> center = {});

/// Subset of points with r_in <= |x| <= r_out.
PointSet restrict_to_shell(const PointSet& points, double r_in, double r_out);

/// Deterministic pseudo-random points uniform in the shell r_in <= |x| <= r_out.
PointSet sample_shell(int dim, double r_in, double r_out, std::size_t count, std::uint64_t seed);

}  // namespace aeflow
