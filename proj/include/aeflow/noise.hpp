#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace aeflow {

/// Uniform grid t_k = k * dt, k = 0..steps. The horizon is steps * dt.
struct TimeGrid {
  double dt = 0.0;
  std::int64_t steps = 0;

  TimeGrid() = default;
  TimeGrid(double dt, std::int64_t steps);
  /// Grid with the given horizon; throws unless horizon / dt is an integer (to 1e-9).
  static TimeGrid from_horizon(double horizon, double dt);

  double horizon() const { return static_cast<double>(steps) * dt; }
  double time(std::int64_t k) const { return static_cast<double>(k) * dt; }
  /// Index k with t_k == t (to 1e-9 relative); throws ValidationError otherwise.
  std::int64_t index_of(double t) const;
  bool operator==(const TimeGrid&) const = default;
};

/// Brownian increments dW_k in R^m on a TimeGrid, stored row-major
/// (increments[k * m + l]). Immutable after construction; every ensemble member
/// reads the same increments.
class NoiseBundle {
 public:
  NoiseBundle() = default;
  NoiseBundle(std::uint64_t seed, int noise_dim, TimeGrid grid, std::vector<double> increments,
              std::string generator, std::string lineage = "base");

  std::uint64_t seed() const { return seed_; }
  int noise_dim() const { return m_; }
  const TimeGrid& grid() const { return grid_; }
  double dt() const { return grid_.dt; }
  std::int64_t steps() const { return grid_.steps; }
  double horizon() const { return grid_.horizon(); }
  const std::string& generator() const { return generator_; }
  /// Human-readable transformation history, e.g. "base|shift(250)|reverse".
  const std::string& lineage() const { return lineage_; }

  std::span<const double> increment(std::int64_t k) const {
    return {increments_.data() + k * m_, static_cast<std::size_t>(m_)};
  }
  const std::vector<double>& increments() const { return increments_; }

  /// W(t_k) = sum_{j<k} dW_j; W(t_0) = 0.
  std::vector<double> path_at(std::int64_t k) const;
  /// Full path, (steps + 1) x m.
  std::vector<double> path() const;

  bool operator==(const NoiseBundle& other) const;

 private:
  std::uint64_t seed_ = 0;
  int m_ = 0;
  TimeGrid grid_;
  std::vector<double> increments_;
  std::string generator_;
  std::string lineage_;
};

inline constexpr const char* kPhiloxGenerator = "philox4x32-10/box-muller";

/// Deterministic bundle: increment (k, l) is a pure function of (seed, k, l).
/// Generation is split across workers by step range; the result does not depend on
/// the worker count.
NoiseBundle generate(std::uint64_t seed, int noise_dim, TimeGrid grid, int workers = 0);

/// Path W(s + t) - W(s): drops the first j = s/dt increments.
NoiseBundle shift(const NoiseBundle& bundle, double s);
NoiseBundle shift_steps(const NoiseBundle& bundle, std::int64_t j);

/// Path W^T_t = W(T - t) - W(T); increment k of the result is -dW_{K-1-k}.
NoiseBundle reverse(const NoiseBundle& bundle, double horizon);

/// First `steps` increments (restriction of the path to [0, steps * dt]).
NoiseBundle truncate(const NoiseBundle& bundle, std::int64_t steps);

/// Same path on a grid `factor` times coarser: increments summed in consecutive groups.
NoiseBundle coarsen(const NoiseBundle& bundle, int factor);

/// True when both bundles come from the same seeded path and agree on W at every time
/// common to both grids (coarsened variants of one path qualify).
bool same_path(const NoiseBundle& a, const NoiseBundle& b, double tol = 1e-12);

/// CSV dump: '#'-prefixed header (seed, m, dt, K, generator, lineage), one row per step.
void write_csv(const NoiseBundle& bundle, std::ostream& out);
NoiseBundle read_csv(std::istream& in);
/// Flat little-endian binary dump with the same header fields.
void write_binary(const NoiseBundle& bundle, std::ostream& out);
NoiseBundle read_binary(std::istream& in);

}  // namespace aeflow
