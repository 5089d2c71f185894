#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace aeflow {

/// Gauss–Legendre nodes/weights on [-1, 1] (Newton iteration on P_n).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// Composite Gauss–Legendre integral of f over [a, b].
template <class F>
double integrate_gl(F&& f, double a, double b, int panels = 16, int order = 16) {
  static thread_local int cached_order = 0;
  static thread_local std::pair<std::vector<double>, std::vector<double>> rule;
  if (cached_order != order) {
    rule = gauss_legendre(order);
    cached_order = order;
  }
  const double width = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * width;
    for (int i = 0; i < order; ++i) sum += rule.second[i] * f(mid + 0.5 * width * rule.first[i]);
  }
  return 0.5 * width * sum;
}

}  // namespace aeflow
