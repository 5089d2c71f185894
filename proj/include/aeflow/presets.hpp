#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aeflow/coeff.hpp"

namespace aeflow {

/// Radial field b = beta x / (|x|^2 + e), sigma = x (x)^T / (|x|^2 + e) in d >= 3 with
/// m = d. `level` absent gives the singular field (e = 0, singularity at the origin);
/// level n gives the explicit regularisation e = 1/n. All derivatives are analytic.
FieldPtr example_field(int d, double beta, std::optional<int> level = std::nullopt);

/// Smallest admissible beta for the radial example: (4d^2 + 5d) / (d - 2).
double example_beta_threshold(int d);

/// Closed-form scalar quantities of the regularised radial example at |x|^2 = r2,
/// as displayed in its derivation. Used as independent checks of the tensor code.
namespace radial_example {
double div_b(int d, double beta, double n, double r2);
double div_sigma_norm2(int d, double n, double r2);
double grad_contraction(int d, double n, double r2);     // d_i s^{jl} d_j s^{il}
double hessian_contraction(int d, double n, double r2);  // s^{il} d_i div s^{.l}
/// Termwise upper bound [-beta(d-2) + (d+3)/2 + (4d-2) + 4d^2] / (r2 + 1/n).
double termwise_envelope(int d, double beta, double n, double r2);
}  // namespace radial_example

/// b = v, sigma = S (d x m, row-major).
FieldPtr constant_field(std::vector<double> v, std::vector<double> sigma, int m);
/// b = A x (A d x d row-major), sigma = S constant.
FieldPtr linear_field(std::vector<double> a, std::vector<double> sigma, int m);
/// Ornstein–Uhlenbeck: b = -x, sigma = sqrt(2) I.
FieldPtr ou_field(int d);
/// Planar rotation with a weak radial pull: b = (-x2, x1) - 0.1 x, sigma = 0.1 I.
FieldPtr rotation_field();
/// Smooth globally Lipschitz field with state-dependent diagonal noise:
/// b^i = -x^i + 0.5 sin(x^{i+1}), sigma^{ii} = 0.3 (1 + 0.5 cos x^i). m = d.
FieldPtr smooth_field(int d);

/// Field sampled on a tensor grid and interpolated multilinearly (clamped outside the
/// sampled box). CSV columns: x0..x{d-1}, b0..b{d-1}, s00..s{d-1}{m-1}; a header row
/// naming them is required. Derivatives by finite differences.
FieldPtr user_grid_field(const std::filesystem::path& csv);
FieldPtr user_grid_field_from_string(const std::string& csv_text, const std::string& name = "user_grid");

struct PresetInfo {
  std::string name;
  std::string anchor;
  std::string description;
};

std::vector<PresetInfo> list_presets();

}  // namespace aeflow
