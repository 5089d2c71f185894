#include <algorithm>

#include "aeflow/kernels.hpp"

namespace aeflow::kernels::scalar {

void euler_step(const EulerStepArgs& a) {
  const std::size_t n = a.count * static_cast<std::size_t>(a.d);
  const auto m = static_cast<std::size_t>(a.m);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = a.x[j] + a.drift[j] * a.dt;
    for (std::size_t l = 0; l < m; ++l) acc = acc + a.diff[j * m + l] * a.dw[l];
    a.x[j] = acc;
  }
}

void log_density_step(const LogDensityArgs& a) {
  const auto m = static_cast<std::size_t>(a.m);
  for (std::size_t p = 0; p < a.count; ++p) {
    double acc = a.log_rho[p] + a.rate[p] * a.dt;
    for (std::size_t l = 0; l < m; ++l) acc = acc + a.coef[p * m + l] * a.dw[l];
    a.log_rho[p] = acc;
  }
}

void ball_max(const BallMaxArgs& a) {
  for (std::size_t n = 0; n < a.count; ++n) {
    const double* centre = a.base + n;
    double sum = 0.0;
    double best = 0.0;
    std::size_t o = 0;
    for (std::size_t c = 0; c < a.checkpoint_end.size(); ++c) {
      for (; o < a.checkpoint_end[c]; ++o) sum = sum + centre[a.offsets[o]];
      best = std::max(best, sum / a.node_count[c]);
    }
    a.out[n] = best;
  }
}

}  // namespace aeflow::kernels::scalar
