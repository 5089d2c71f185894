#include "aeflow/bank.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <memory>

#include "aeflow/common.hpp"

namespace aeflow {

namespace {

// g(q) = exp(1 - 1/(1-q)) on q < 1 and its derivatives in q.
struct Profile {
  double g, g1, g2;
};

Profile profile(double q) {
  if (q >= 1.0) return {0.0, 0.0, 0.0};
  const double a = 1.0 / (1.0 - q);
  const double g = std::exp(1.0 - a);
  return {g, -g * a * a, g * (a * a * a * a - 2.0 * a * a * a)};
}

}  // namespace

TestFunction TestFunction::bump(std::vector<double> center, double width) {
  if (!(width > 0.0)) throw ValidationError("bump.width", "must be > 0");
  TestFunction f;
  f.dim = static_cast<int>(center.size());
  f.name = "bump";
  f.center = center;
  f.support_radius = width;
  const double w2 = width * width;
  auto c = std::make_shared<const std::vector<double>>(std::move(center));
  auto q_of = [c, w2](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - (*c)[i]) * (x[i] - (*c)[i]);
    return s / w2;
  };
  f.value = [q_of](std::span<const double> x) { return profile(q_of(x)).g; };
  f.gradient = [c, w2, q_of](std::span<const double> x, std::span<double> out) {
    const auto p = profile(q_of(x));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = p.g1 * 2.0 * (x[i] - (*c)[i]) / w2;
  };
  f.hessian = [c, w2, q_of](std::span<const double> x, std::span<double> out) {
    const auto p = profile(q_of(x));
    const std::size_t d = x.size();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double qi = 2.0 * (x[i] - (*c)[i]) / w2, qj = 2.0 * (x[j] - (*c)[j]) / w2;
        out[i * d + j] = p.g2 * qi * qj + (i == j ? p.g1 * 2.0 / w2 : 0.0);
      }
  };
  return f;
}

TestFunction TestFunction::poly_bump(std::vector<int> exponents, std::vector<double> center, double width) {
  if (exponents.size() != center.size()) throw ValidationError("poly_bump.exponents", "dimension mismatch");
  for (int e : exponents)
    if (e < 0) throw ValidationError("poly_bump.exponents", "must be >= 0");
  TestFunction base = bump(center, width);
  TestFunction f = base;
  f.name = "poly_bump";
  auto e = std::make_shared<const std::vector<int>>(std::move(exponents));
  // Monomial and derivatives.
  auto mono = [e](std::span<const double> x, std::size_t skip1, std::size_t skip2, int& coef) {
    double v = 1.0;
    coef = 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
      int p = (*e)[i];
      if (i == skip1) {
        coef *= p;
        --p;
      }
      if (i == skip2) {
        coef *= p;
        --p;
      }
      if (p < 0) return 0.0;
      v *= std::pow(x[i], p);
    }
    return coef * v;
  };
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  auto bv = base.value;
  auto bg = base.gradient, bh = base.hessian;
  f.value = [mono, bv](std::span<const double> x) {
    int c;
    return mono(x, none, none, c) * bv(x);
  };
  f.gradient = [mono, bv, bg](std::span<const double> x, std::span<double> out) {
    int c;
    const double p = mono(x, none, none, c), b = bv(x);
    bg(x, out);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = p * out[i] + b * mono(x, i, none, c);
  };
  f.hessian = [mono, bv, bg, bh](std::span<const double> x, std::span<double> out) {
    int c;
    const std::size_t d = x.size();
    const double p = mono(x, none, none, c), b = bv(x);
    std::vector<double> g(d), dp(d);
    bg(x, g);
    bh(x, out);
    for (std::size_t i = 0; i < d; ++i) dp[i] = mono(x, i, none, c);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out[i * d + j] = p * out[i * d + j] + dp[i] * g[j] + g[i] * dp[j] + b * mono(x, i, j, c);
  };
  return f;
}

TestFunction TestFunction::constant_one(int dim) {
  TestFunction f;
  f.name = "one";
  f.dim = dim;
  f.center.assign(dim, 0.0);
  f.value = [](std::span<const double>) { return 1.0; };
  f.gradient = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  f.hessian = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  return f;
}

}  // namespace aeflow
