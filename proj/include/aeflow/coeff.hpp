#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aeflow/common.hpp"

namespace aeflow {

/// Ball around a point where the coefficients are discontinuous or not differentiable.
struct Singularity {
  std::vector<double> center;
  double radius = 0.0;
};

/// Queries closer than this to a declared singularity are rejected.
inline constexpr double kSingularityTolerance = 1e-8;

/// Drift b: R^d -> R^d and diffusion sigma: R^d -> R^{d x m} of
///   dX = b(X) dt + sigma(X) dW.
///
/// Layouts (all row-major):
///   drift              b[i]
///   diffusion          sigma[i*m + l]
///   drift_jacobian     db[i*d + j]              = d_j b^i
///   diffusion_jacobian ds[(i*m + l)*d + k]      = d_k sigma^{il}
///   diffusion_hessian  dds[((i*m + l)*d + k)*d + p] = d_k d_p sigma^{il}
///
/// Derivative callbacks are optional; missing ones fall back to central finite
/// differences with step 1e-5 * fd_scale (1e-4 * fd_scale for second differences of
/// values). Evaluation is pure and thread-safe.
class CoefficientField {
 public:
  using PointFn = std::function<void(std::span<const double> x, std::span<double> out)>;

  struct Callbacks {
    PointFn drift;
    PointFn diffusion;
    PointFn drift_jacobian;
    PointFn diffusion_jacobian;
    PointFn diffusion_hessian;
  };

  CoefficientField(int dim, int noise_dim, Callbacks callbacks, std::string name = "field");

  int dim() const { return d_; }
  int noise_dim() const { return m_; }
  const std::string& name() const { return name_; }

  void drift(std::span<const double> x, std::span<double> out) const { cb_.drift(x, out); }
  void diffusion(std::span<const double> x, std::span<double> out) const { cb_.diffusion(x, out); }
  void drift_jacobian(std::span<const double> x, std::span<double> out) const;
  void diffusion_jacobian(std::span<const double> x, std::span<double> out) const;
  void diffusion_hessian(std::span<const double> x, std::span<double> out) const;

  std::vector<double> drift(std::span<const double> x) const;
  std::vector<double> diffusion(std::span<const double> x) const;

  bool has_analytic_drift_jacobian() const { return static_cast<bool>(cb_.drift_jacobian); }
  bool has_analytic_diffusion_jacobian() const { return static_cast<bool>(cb_.diffusion_jacobian); }
  bool has_analytic_diffusion_hessian() const { return static_cast<bool>(cb_.diffusion_hessian); }
  const Callbacks& callbacks() const { return cb_; }

  // Metadata.
  std::vector<Singularity> singularities;
  /// sigma does not depend on x (its derivatives vanish identically).
  bool constant_diffusion = false;
  /// Fields are evaluable on |x| <= domain_radius.
  double domain_radius = std::numeric_limits<double>::infinity();
  double fd_scale = 1.0;

  /// |x - c| <= radius + tol for some declared singularity.
  bool near_singularity(std::span<const double> x, double tol = kSingularityTolerance) const;

 private:
  int d_;
  int m_;
  Callbacks cb_;
  std::string name_;
};

using FieldPtr = std::shared_ptr<const CoefficientField>;

/// All first- and second-order data of (b, sigma) at one point, plus the scalar and
/// vector contractions that appear in the density, inverse-flow, and condition formulas.
class LocalJet {
 public:
  enum Order { values = 0, first = 1, second = 2 };

  LocalJet(int d, int m);
  /// Fills the jet up to `order`. Throws SingularityError near declared singularities
  /// when order >= first.
  void evaluate(const CoefficientField& field, std::span<const double> x, Order order);

  int d, m;
  std::vector<double> b, sigma, grad_b, grad_sigma, hess_sigma;

  double div_b() const;
  /// d_i sigma^{jl} d_j sigma^{il}
  double sigma_grad_contraction() const;
  /// sigma^{il} d_i d_j sigma^{jl}
  double sigma_hessian_contraction() const;
  /// div sigma^{.l} = d_i sigma^{il}, one entry per Brownian coordinate.
  void div_sigma(std::span<double> out) const;
  double div_sigma_norm2() const;
  /// c^i = sigma^{jl} d_j sigma^{il}. Then b_sigma = b - c and tilde b = b - c/2.
  void stratonovich_correction(std::span<double> out) const;
  /// ||sigma||_{HS}^2
  double sigma_hs2() const;
};

/// Derived accessors b_sigma^i = b^i - sigma^{jl}d_j sigma^{il}, tilde b^i = b^i - c^i/2.
std::vector<double> drift_b_sigma(const CoefficientField& field, std::span<const double> x);
std::vector<double> drift_tilde(const CoefficientField& field, std::span<const double> x);

/// Coefficients of the inverse flow in Ito form: drift -b + c (c as in
/// LocalJet::stratonovich_correction), diffusion sigma. Driven by the time-reversed
/// noise this realises X_T^{-1}. Derivatives are composed analytically from the
/// parent's jets.
FieldPtr inverse_flow_field(FieldPtr field);

/// alpha * f + g (same dimensions); derivatives combine linearly.
FieldPtr linear_combination(double alpha, FieldPtr f, FieldPtr g);

// ---------------------------------------------------------------------------------
// Mollification b_n = (b * rho_n) chi_n.

/// Smooth bump kernel exp(-1/(1-|x|^2)) on the unit ball, normalised to unit mass, and
/// the radial cutoff chi (1 on |x|<=1, 0 on |x|>=2) obtained by integrating the same
/// bump profile across the transition band.
class Mollifier {
 public:
  /// `level` n >= 1; `quadrature_order` points per axis of the tensor Gauss–Legendre
  /// rule on the kernel ball.
  Mollifier(int dim, int level, int quadrature_order = 0);

  int dim() const { return d_; }
  int level() const { return n_; }
  int quadrature_order() const { return q_; }

  /// rho(x) (unit kernel, support B_1) and its gradient/Hessian.
  double kernel(std::span<const double> x) const;
  void kernel_gradient(std::span<const double> x, std::span<double> out) const;
  void kernel_hessian(std::span<const double> x, std::span<double> out) const;
  double normalisation() const { return norm_; }

  /// chi(x) and derivatives; chi_n(x) = chi(x/n).
  double cutoff(std::span<const double> x) const;
  double cutoff_profile(double r) const;
  double cutoff_profile_derivative(double r) const;
  double cutoff_profile_second_derivative(double r) const;
  /// sup |grad chi|.
  double cutoff_gradient_sup() const;

  struct Node {
    std::vector<double> u;  // point in B_1
    double w_rho;           // weight * rho(u)
    std::vector<double> w_grad;  // weight * grad rho(u)
    std::vector<double> w_hess;  // weight * hess rho(u)
  };
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  int d_, n_, q_;
  double norm_ = 1.0;
  double band_integral_ = 1.0;
  std::vector<Node> nodes_;
};

/// b_n(x) = (b * rho_n)(x) chi_n(x), sigma_n likewise, with derivatives obtained by
/// differentiating the kernel under the integral and applying the product rule with
/// chi_n. Rejects fields whose domain does not contain B_{2n + 1/n}.
FieldPtr mollify(FieldPtr field, const Mollifier& mollifier);

// ---------------------------------------------------------------------------------
// Structural condition checks. All are grid-sup approximations of essential suprema.

struct GridSupReport {
  std::string condition;
  std::size_t points_evaluated = 0;
  std::size_t points_rejected = 0;  // singular or non-finite
  double max_value = -std::numeric_limits<double>::infinity();
  std::vector<double> argmax;
  double positive_part = 0.0;  // max(max_value, 0)
  double constant = 0.0;       // the induced C
  bool holds = false;
  std::string grid_description;
};

/// Point value of -div b + 1/2 d_i s^{jl} d_j s^{il} + s^{il} d_ij s^{jl} + w |div s|^2
/// (w = 1 in the uniform-in-n condition, w = p/2 in the inverse-Jacobian moment bound).
double en3_expression(const LocalJet& jet, double divsigma_weight = 1.0);

/// Grid sup of the positive part of en3_expression. `holds` when the positive part is
/// <= tol; `constant` is C_1 = positive part.
GridSupReport check_en3(const CoefficientField& field, const PointSet& grid, double divsigma_weight = 1.0,
                        double tol = 1e-9);

struct CoercivityReport {
  bool nonpositive_branch = false;  // <x,b> + ||sigma||^2 <= 0 on the grid
  bool affine_branch = false;       // <= -C1 |x|^2 + C2 with C1 > 0
  double c1 = 0.0, c2 = 0.0;
  double max_value = 0.0;  // max of <x,b> + ||sigma||^2
  bool holds = false;
  std::size_t points_evaluated = 0;
  std::string message;
  GridSupReport growth;  // companion growth check (filled by verify_conditions)
};

/// <x,b(x)> + ||sigma(x)||_{HS}^2 <= 0, or <= -C1|x|^2 + C2: C1 from the least-squares
/// slope against |x|^2 (must be positive), C2 the smallest offset valid on the grid.
CoercivityReport check_coercivity(const CoefficientField& field, const PointSet& grid, double tol = 1e-12);

/// Smallest C2 >= 0 with <x,b> + 2||sigma||^2 <= C2(|x|^2 + 1) on the grid.
GridSupReport check_growth_en4(const CoefficientField& field, const PointSet& grid);

/// Grid sup of sup_{|z|<=1} |sigma(x - z)| * |grad div sigma|(x); the inner sup is taken
/// over a lattice of spacing 1/4 in the unit ball. Informational only.
GridSupReport check_si(const CoefficientField& field, const PointSet& grid);

/// Lattice L^1(B_R) and L^2(B_R) distances between two fields' drifts and diffusions:
/// returns {int |b_f - b_g|, (int |s_f - s_g|^2)^{1/2}} over `grid` (masses cell_mass).
std::pair<double, double> field_distance(const CoefficientField& f, const CoefficientField& g, const PointSet& grid);

}  // namespace aeflow
