#include <immintrin.h>

#include "aeflow/kernels.hpp"

namespace aeflow::kernels::avx2 {

void euler_step(const EulerStepArgs& a) {
  const std::size_t n = a.count * static_cast<std::size_t>(a.d);
  const auto m = static_cast<std::size_t>(a.m);
  const __m256d dt = _mm256_set1_pd(a.dt);
  const __m256i stride = _mm256_set_epi64x(3 * static_cast<long long>(m), 2 * static_cast<long long>(m),
                                           static_cast<long long>(m), 0);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_add_pd(_mm256_loadu_pd(a.x + j), _mm256_mul_pd(_mm256_loadu_pd(a.drift + j), dt));
    for (std::size_t l = 0; l < m; ++l) {
      const __m256d s = _mm256_i64gather_pd(a.diff + j * m + l, stride, 8);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(s, _mm256_set1_pd(a.dw[l])));
    }
    _mm256_storeu_pd(a.x + j, acc);
  }
  for (; j < n; ++j) {
    double acc = a.x[j] + a.drift[j] * a.dt;
    for (std::size_t l = 0; l < m; ++l) acc = acc + a.diff[j * m + l] * a.dw[l];
    a.x[j] = acc;
  }
}

void log_density_step(const LogDensityArgs& a) {
  const auto m = static_cast<std::size_t>(a.m);
  const __m256d dt = _mm256_set1_pd(a.dt);
  const __m256i stride = _mm256_set_epi64x(3 * static_cast<long long>(m), 2 * static_cast<long long>(m),
                                           static_cast<long long>(m), 0);
  std::size_t p = 0;
  for (; p + 4 <= a.count; p += 4) {
    __m256d acc =
        _mm256_add_pd(_mm256_loadu_pd(a.log_rho + p), _mm256_mul_pd(_mm256_loadu_pd(a.rate + p), dt));
    for (std::size_t l = 0; l < m; ++l) {
      const __m256d c = _mm256_i64gather_pd(a.coef + p * m + l, stride, 8);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(c, _mm256_set1_pd(a.dw[l])));
    }
    _mm256_storeu_pd(a.log_rho + p, acc);
  }
  for (; p < a.count; ++p) {
    double acc = a.log_rho[p] + a.rate[p] * a.dt;
    for (std::size_t l = 0; l < m; ++l) acc = acc + a.coef[p * m + l] * a.dw[l];
    a.log_rho[p] = acc;
  }
}

void ball_max(const BallMaxArgs& a) {
  std::size_t n = 0;
  for (; n + 4 <= a.count; n += 4) {
    const double* centre = a.base + n;
    __m256d sum = _mm256_setzero_pd();
    __m256d best = _mm256_setzero_pd();
    std::size_t o = 0;
    for (std::size_t c = 0; c < a.checkpoint_end.size(); ++c) {
      for (; o < a.checkpoint_end[c]; ++o) sum = _mm256_add_pd(sum, _mm256_loadu_pd(centre + a.offsets[o]));
      // max(best, avg) with the same NaN-free semantics as std::max(best, avg).
      const __m256d avg = _mm256_div_pd(sum, _mm256_set1_pd(a.node_count[c]));
      best = _mm256_blendv_pd(best, avg, _mm256_cmp_pd(best, avg, _CMP_LT_OQ));
    }
    _mm256_storeu_pd(a.out + n, best);
  }
  if (n < a.count) {
    BallMaxArgs tail = a;
    tail.base = a.base + n;
    tail.count = a.count - n;
    tail.out = a.out + n;
    scalar::ball_max(tail);
  }
}

}  // namespace aeflow::kernels::avx2
