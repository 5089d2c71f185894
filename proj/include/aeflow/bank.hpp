#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace aeflow {

/// Smooth compactly supported test function with analytic first and second derivatives.
/// Support is the closed ball of radius `support_radius` around `center`.
struct TestFunction {
  std::string name;
  int dim = 0;
  std::vector<double> center;
  double support_radius = 0.0;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;  // d entries
  std::function<void(std::span<const double>, std::span<double>)> hessian;   // d*d row-major

  /// exp(1 - 1/(1 - |x - c|^2 / w^2)) inside the ball of radius w, 0 outside. Peak 1.
  static TestFunction bump(std::vector<double> center, double width);
  /// prod_i x_i^{e_i} times bump(center, width).
  static TestFunction poly_bump(std::vector<int> exponents, std::vector<double> center, double width);
  /// phi = 1 everywhere (no compact support; rejected where support matters).
  static TestFunction constant_one(int dim);

  bool compact() const { return support_radius > 0.0; }
};

using FunctionBank = std::vector<TestFunction>;

}  // namespace aeflow
