#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aeflow/coeff.hpp"
#include "aeflow/io.hpp"
#include "aeflow/noise.hpp"

namespace aeflow {

enum class Scheme { euler_maruyama, milstein_diag };
Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

enum class ParticleState : std::uint8_t { active = 0, escaped = 1, singular_hit = 2 };
std::string state_name(ParticleState s);

struct FlowOptions {
  Scheme scheme = Scheme::euler_maruyama;
  /// Particles with |X| > escape_radius are frozen. 0 selects 10x the largest |x_i| of
  /// the initial set (10 if that is 0).
  double escape_radius = 0.0;
  /// Steps to integrate; -1 integrates the whole bundle.
  std::int64_t steps = -1;
  /// Snapshot every `save_every` steps (0: only the initial and final time). Extra
  /// snapshot steps may be listed in `save_steps`.
  std::int64_t save_every = 0;
  std::vector<std::int64_t> save_steps;
  bool track_density = false;
  int workers = 0;
};

/// Trajectories of a lattice (or any point set) of initial points under one bundle.
struct FlowEnsemble {
  int d = 0;
  int m = 0;
  PointSet initial;
  std::shared_ptr<const NoiseBundle> noise;
  std::string field_name;
  Scheme scheme = Scheme::euler_maruyama;
  double escape_radius = 0.0;
  std::int64_t steps = 0;

  std::vector<std::int64_t> save_steps;
  std::vector<std::vector<double>> positions;  // per snapshot, N*d
  std::vector<std::vector<double>> log_rho;    // per snapshot, N (density tracking only)

  std::vector<ParticleState> state;
  std::vector<std::int64_t> event_step;  // step index of escape / singular hit, -1 if none
  /// max over integrated steps k <= tau of |X_{t_k}|^2
  std::vector<double> sup_norm2;

  std::size_t size() const { return initial.size(); }
  double dt() const { return noise->dt(); }
  double horizon() const { return static_cast<double>(steps) * noise->dt(); }
  std::span<const double> position(std::size_t snapshot, std::size_t p) const {
    return {positions[snapshot].data() + p * d, static_cast<std::size_t>(d)};
  }
  std::span<const double> final_position(std::size_t p) const { return position(positions.size() - 1, p); }
  bool frozen(std::size_t p) const { return state[p] != ParticleState::active; }
  /// Snapshot index whose step equals k; throws when k was not saved.
  std::size_t snapshot_of(std::int64_t k) const;
  std::size_t count(ParticleState s) const;

  /// Per-snapshot CSV: id, x..., log_rho (nan if untracked), state, event_step.
  CsvTable snapshot_table(std::size_t snapshot) const;
};

/// Advances a fixed set of particles one step at a time. Used by integrate_forward and
/// by diagnostics that need several flows in lockstep.
class EnsembleStepper {
 public:
  EnsembleStepper(const CoefficientField& field, const NoiseBundle& noise, std::span<const double> start,
                  Scheme scheme, double escape_radius, bool track_density);

  /// Applies step k (increment dW_k) to every active particle.
  void step(std::int64_t k);
  std::size_t size() const { return n_; }
  std::span<const double> positions() const { return x_; }
  std::span<const double> log_rho() const { return log_rho_; }
  const std::vector<ParticleState>& state() const { return state_; }
  const std::vector<std::int64_t>& event_step() const { return event_; }
  const std::vector<double>& sup_norm2() const { return sup_; }

 private:
  const CoefficientField& field_;
  const NoiseBundle& noise_;
  int d_, m_;
  std::size_t n_;
  Scheme scheme_;
  double radius2_;
  bool track_;
  std::vector<double> x_, log_rho_, drift_, diff_, rate_, coef_, corr_, sup_;
  std::vector<ParticleState> state_;
  std::vector<std::int64_t> event_;
  LocalJet jet_;
};

double default_escape_radius(const PointSet& initial);

FlowEnsemble integrate_forward(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise,
                               const PointSet& initial, const FlowOptions& options = {});

/// X_T^{-1} through the inverse-flow coefficients driven by reverse(truncate(noise, T)).
FlowEnsemble integrate_inverse(FieldPtr field, std::shared_ptr<const NoiseBundle> noise, double horizon,
                               const PointSet& initial, FlowOptions options = {});

struct CocycleReport {
  std::int64_t s_steps = 0, t_steps = 0;
  double max_abs_discrepancy = 0.0;
  double max_rel_discrepancy = 0.0;  // relative to max(1, |X_{s+t}|)
  std::size_t compared = 0;
  std::size_t excluded_frozen = 0;
  std::string message;
};

/// X_{s+t}(x) against X_t(shift(noise, s), X_s(x)), both with the same increments.
CocycleReport check_cocycle(const CoefficientField& field, std::shared_ptr<const NoiseBundle> noise, double s,
                            double t, const PointSet& grid, FlowOptions options = {});

struct SemigroupEstimate {
  std::vector<double> mean;
  std::vector<double> standard_error;
  std::size_t seeds = 0;
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// Monte Carlo T_t phi(x_i) = E phi(X_t(x_i)) over independent bundles, one per seed.
/// Frozen particles contribute phi at their stopped position.
SemigroupEstimate estimate_semigroup(const CoefficientField& field, const std::vector<std::uint64_t>& seeds,
                                     double t, double dt, const ScalarFn& phi, const PointSet& grid,
                                     FlowOptions options = {});

}  // namespace aeflow
