#include "aeflow/coeff.hpp"

#include <algorithm>
#include <cmath>

#include "aeflow/quadrature.hpp"

namespace aeflow {

namespace {

using Span = std::span<double>;
using CSpan = std::span<const double>;

// Central differences of a vector-valued callback; out[c*d + k] = d_k f_c.
void central_jacobian(const CoefficientField::PointFn& f, std::size_t out_dim, CSpan x, double h, Span out) {
  const std::size_t d = x.size();
  std::vector<double> xp(x.begin(), x.end()), fp(out_dim), fm(out_dim);
  for (std::size_t k = 0; k < d; ++k) {
    xp[k] = x[k] + h;
    f(xp, fp);
    xp[k] = x[k] - h;
    f(xp, fm);
    xp[k] = x[k];
    for (std::size_t c = 0; c < out_dim; ++c) out[c * d + k] = (fp[c] - fm[c]) / (2.0 * h);
  }
}

}  // namespace

CoefficientField::CoefficientField(int dim, int noise_dim, Callbacks callbacks, std::string name)
    : d_(dim), m_(noise_dim), cb_(std::move(callbacks)), name_(std::move(name)) {
  if (d_ < 1) throw ValidationError("field.d", "dimension must be >= 1");
  if (m_ < 1) throw ValidationError("field.m", "noise dimension must be >= 1");
  if (!cb_.drift || !cb_.diffusion) throw ValidationError("field", "drift and diffusion callbacks are required");
}

std::vector<double> CoefficientField::drift(CSpan x) const {
  std::vector<double> out(d_);
  drift(x, out);
  return out;
}

std::vector<double> CoefficientField::diffusion(CSpan x) const {
  std::vector<double> out(static_cast<std::size_t>(d_) * m_);
  diffusion(x, out);
  return out;
}

void CoefficientField::drift_jacobian(CSpan x, Span out) const {
  if (cb_.drift_jacobian) return cb_.drift_jacobian(x, out);
  central_jacobian(cb_.drift, d_, x, 1e-5 * fd_scale, out);
}

void CoefficientField::diffusion_jacobian(CSpan x, Span out) const {
  if (cb_.diffusion_jacobian) return cb_.diffusion_jacobian(x, out);
  central_jacobian(cb_.diffusion, static_cast<std::size_t>(d_) * m_, x, 1e-5 * fd_scale, out);
}

void CoefficientField::diffusion_hessian(CSpan x, Span out) const {
  if (cb_.diffusion_hessian) return cb_.diffusion_hessian(x, out);
  const std::size_t dm = static_cast<std::size_t>(d_) * m_;
  const std::size_t d = d_;
  if (cb_.diffusion_jacobian) {
    central_jacobian(cb_.diffusion_jacobian, dm * d, x, 1e-5 * fd_scale, out);
    return;
  }
  if (constant_diffusion) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double h = 1e-4 * fd_scale;
  std::vector<double> xp(x.begin(), x.end()), f0(dm), fa(dm), fb(dm), fc(dm), fd(dm);
  cb_.diffusion(x, f0);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t p = k; p < d; ++p) {
      if (k == p) {
        xp[k] = x[k] + h;
        cb_.diffusion(xp, fa);
        xp[k] = x[k] - h;
        cb_.diffusion(xp, fb);
        xp[k] = x[k];
        for (std::size_t c = 0; c < dm; ++c) out[(c * d + k) * d + k] = (fa[c] - 2.0 * f0[c] + fb[c]) / (h * h);
      } else {
        auto eval = [&](double sk, double sp, std::vector<double>& dst) {
          xp[k] = x[k] + sk * h;
          xp[p] = x[p] + sp * h;
          cb_.diffusion(xp, dst);
          xp[k] = x[k];
          xp[p] = x[p];
        };
        eval(1, 1, fa);
        eval(1, -1, fb);
        eval(-1, 1, fc);
        eval(-1, -1, fd);
        for (std::size_t c = 0; c < dm; ++c) {
          const double v = (fa[c] - fb[c] - fc[c] + fd[c]) / (4.0 * h * h);
          out[(c * d + k) * d + p] = v;
          out[(c * d + p) * d + k] = v;
        }
      }
    }
  }
}

bool CoefficientField::near_singularity(CSpan x, double tol) const {
  for (const auto& s : singularities) {
    double r2 = 0.0;
    for (int a = 0; a < d_; ++a) r2 += (x[a] - s.center[a]) * (x[a] - s.center[a]);
    const double lim = s.radius + tol;
    if (r2 <= lim * lim) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------------

LocalJet::LocalJet(int d_, int m_)
    : d(d_),
      m(m_),
      b(d_),
      sigma(static_cast<std::size_t>(d_) * m_),
      grad_b(static_cast<std::size_t>(d_) * d_),
      grad_sigma(static_cast<std::size_t>(d_) * m_ * d_),
      hess_sigma(static_cast<std::size_t>(d_) * m_ * d_ * d_) {}

void LocalJet::evaluate(const CoefficientField& field, CSpan x, Order order) {
  if (order >= first && field.near_singularity(x))
    throw SingularityError("derivative query at a declared singularity of '" + field.name() + "'");
  field.drift(x, b);
  field.diffusion(x, sigma);
  if (order >= first) {
    field.drift_jacobian(x, grad_b);
    if (field.constant_diffusion)
      std::fill(grad_sigma.begin(), grad_sigma.end(), 0.0);
    else
      field.diffusion_jacobian(x, grad_sigma);
  }
  if (order >= second) {
    if (field.constant_diffusion)
      std::fill(hess_sigma.begin(), hess_sigma.end(), 0.0);
    else
      field.diffusion_hessian(x, hess_sigma);
  }
}

double LocalJet::div_b() const {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += grad_b[i * d + i];
  return s;
}

double LocalJet::sigma_grad_contraction() const {
  double s = 0.0;
  for (int l = 0; l < m; ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) s += grad_sigma[(j * m + l) * d + i] * grad_sigma[(i * m + l) * d + j];
  return s;
}

double LocalJet::sigma_hessian_contraction() const {
  double s = 0.0;
  for (int l = 0; l < m; ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) s += sigma[i * m + l] * hess_sigma[((j * m + l) * d + i) * d + j];
  return s;
}

void LocalJet::div_sigma(Span out) const {
  for (int l = 0; l < m; ++l) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += grad_sigma[(i * m + l) * d + i];
    out[l] = s;
  }
}

double LocalJet::div_sigma_norm2() const {
  double s = 0.0;
  for (int l = 0; l < m; ++l) {
    double v = 0.0;
    for (int i = 0; i < d; ++i) v += grad_sigma[(i * m + l) * d + i];
    s += v * v;
  }
  return s;
}

void LocalJet::stratonovich_correction(Span out) const {
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j)
      for (int l = 0; l < m; ++l) s += sigma[j * m + l] * grad_sigma[(i * m + l) * d + j];
    out[i] = s;
  }
}

double LocalJet::sigma_hs2() const {
  double s = 0.0;
  for (double v : sigma) s += v * v;
  return s;
}

std::vector<double> drift_b_sigma(const CoefficientField& field, CSpan x) {
  LocalJet jet(field.dim(), field.noise_dim());
  jet.evaluate(field, x, LocalJet::first);
  std::vector<double> c(field.dim());
  jet.stratonovich_correction(c);
  for (int i = 0; i < field.dim(); ++i) c[i] = jet.b[i] - c[i];
  return c;
}

std::vector<double> drift_tilde(const CoefficientField& field, CSpan x) {
  LocalJet jet(field.dim(), field.noise_dim());
  jet.evaluate(field, x, LocalJet::first);
  std::vector<double> c(field.dim());
  jet.stratonovich_correction(c);
  for (int i = 0; i < field.dim(); ++i) c[i] = jet.b[i] - 0.5 * c[i];
  return c;
}

FieldPtr inverse_flow_field(FieldPtr parent) {
  const int d = parent->dim(), m = parent->noise_dim();
  CoefficientField::Callbacks cb;
  const bool constant = parent->constant_diffusion;
  cb.drift = [parent, d, m, constant](CSpan x, Span out) {
    parent->drift(x, out);
    for (int i = 0; i < d; ++i) out[i] = -out[i];
    if (constant) return;
    thread_local std::vector<double> sigma, gs;
    sigma.resize(static_cast<std::size_t>(d) * m);
    gs.resize(static_cast<std::size_t>(d) * m * d);
    parent->diffusion(x, sigma);
    parent->diffusion_jacobian(x, gs);
    for (int i = 0; i < d; ++i) {
      double c = 0.0;
      for (int j = 0; j < d; ++j)
        for (int l = 0; l < m; ++l) c += sigma[j * m + l] * gs[(i * m + l) * d + j];
      out[i] += c;
    }
  };
  cb.diffusion = [parent](CSpan x, Span out) { parent->diffusion(x, out); };
  cb.diffusion_jacobian = [parent](CSpan x, Span out) { parent->diffusion_jacobian(x, out); };
  cb.diffusion_hessian = [parent](CSpan x, Span out) { parent->diffusion_hessian(x, out); };
  cb.drift_jacobian = [parent, d, m, constant](CSpan x, Span out) {
    parent->drift_jacobian(x, out);
    for (auto& v : out) v = -v;
    if (constant) return;
    thread_local std::vector<double> sigma, gs, hs;
    sigma.resize(static_cast<std::size_t>(d) * m);
    gs.resize(static_cast<std::size_t>(d) * m * d);
    hs.resize(static_cast<std::size_t>(d) * m * d * d);
    parent->diffusion(x, sigma);
    parent->diffusion_jacobian(x, gs);
    parent->diffusion_hessian(x, hs);
    // d_k c^i = d_k s^{jl} d_j s^{il} + s^{jl} d_k d_j s^{il}
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) {
        double v = 0.0;
        for (int j = 0; j < d; ++j)
          for (int l = 0; l < m; ++l)
            v += gs[(j * m + l) * d + k] * gs[(i * m + l) * d + j] +
                 sigma[j * m + l] * hs[((i * m + l) * d + k) * d + j];
        out[i * d + k] += v;
      }
  };
  auto f = std::make_shared<CoefficientField>(d, m, std::move(cb), parent->name() + "^{-1}");
  f->singularities = parent->singularities;
  f->constant_diffusion = parent->constant_diffusion;
  f->domain_radius = parent->domain_radius;
  f->fd_scale = parent->fd_scale;
  return f;
}

FieldPtr linear_combination(double alpha, FieldPtr f, FieldPtr g) {
  if (f->dim() != g->dim() || f->noise_dim() != g->noise_dim())
    throw ValidationError("linear_combination", "fields must share (d, m)");
  const int d = f->dim(), m = f->noise_dim();
  auto combine = [alpha](auto getter_f, auto getter_g, std::size_t n) {
    return [=](CSpan x, Span out) {
      thread_local std::vector<double> tmp;
      tmp.resize(n);
      getter_f(x, out);
      getter_g(x, std::span<double>(tmp));
      for (std::size_t i = 0; i < n; ++i) out[i] = alpha * out[i] + tmp[i];
    };
  };
  const std::size_t dm = static_cast<std::size_t>(d) * m;
  CoefficientField::Callbacks cb;
  cb.drift = combine([f](CSpan x, Span o) { f->drift(x, o); }, [g](CSpan x, Span o) { g->drift(x, o); }, d);
  cb.diffusion =
      combine([f](CSpan x, Span o) { f->diffusion(x, o); }, [g](CSpan x, Span o) { g->diffusion(x, o); }, dm);
  cb.drift_jacobian = combine([f](CSpan x, Span o) { f->drift_jacobian(x, o); },
                              [g](CSpan x, Span o) { g->drift_jacobian(x, o); }, static_cast<std::size_t>(d) * d);
  cb.diffusion_jacobian = combine([f](CSpan x, Span o) { f->diffusion_jacobian(x, o); },
                                  [g](CSpan x, Span o) { g->diffusion_jacobian(x, o); }, dm * d);
  cb.diffusion_hessian = combine([f](CSpan x, Span o) { f->diffusion_hessian(x, o); },
                                 [g](CSpan x, Span o) { g->diffusion_hessian(x, o); }, dm * d * d);
  auto h = std::make_shared<CoefficientField>(d, m, std::move(cb), "lincomb(" + f->name() + "," + g->name() + ")");
  h->singularities = f->singularities;
  h->singularities.insert(h->singularities.end(), g->singularities.begin(), g->singularities.end());
  h->constant_diffusion = f->constant_diffusion && g->constant_diffusion;
  h->domain_radius = std::min(f->domain_radius, g->domain_radius);
  return h;
}

// ---------------------------------------------------------------------------------

namespace {

double bump_profile(double u) { return u < 1.0 ? std::exp(-1.0 / (1.0 - u)) : 0.0; }

// Transition-band density on [1, 2] used to build the cutoff.
double band_density(double t) {
  const double v = 2.0 * t - 3.0;
  return std::abs(v) < 1.0 ? std::exp(-1.0 / (1.0 - v * v)) : 0.0;
}

double band_density_derivative(double t) {
  const double v = 2.0 * t - 3.0;
  if (std::abs(v) >= 1.0) return 0.0;
  const double q = 1.0 - v * v;
  return band_density(t) * (-4.0 * v / (q * q));
}

int default_order(int d) {
  switch (d) {
    case 1: return 96;
    case 2: return 40;
    case 3: return 22;
    default: return 10;
  }
}

}  // namespace

Mollifier::Mollifier(int dim, int level, int quadrature_order)
    : d_(dim), n_(level), q_(quadrature_order > 0 ? quadrature_order : default_order(dim)) {
  if (d_ < 1) throw ValidationError("mollifier.d", "must be >= 1");
  if (n_ <= 0) throw ValidationError("mollifier.n", "level must be >= 1");
  const double radial = integrate_gl(
      [this](double r) { return std::pow(r, d_ - 1) * bump_profile(r * r); }, 0.0, 1.0, 64, 16);
  norm_ = 1.0 / (unit_sphere_area(d_) * radial);
  band_integral_ = integrate_gl(band_density, 1.0, 2.0, 64, 16);

  const auto [gx, gw] = gauss_legendre(q_);
  std::vector<int> idx(d_, 0);
  std::vector<double> u(d_);
  double mass = 0.0;
  while (true) {
    double w = 1.0, u2 = 0.0;
    for (int a = 0; a < d_; ++a) {
      u[a] = gx[idx[a]];
      w *= gw[idx[a]];
      u2 += u[a] * u[a];
    }
    if (u2 < 1.0) {
      Node node{u, w * kernel(u), std::vector<double>(d_), std::vector<double>(static_cast<std::size_t>(d_) * d_)};
      kernel_gradient(u, node.w_grad);
      kernel_hessian(u, node.w_hess);
      for (auto& v : node.w_grad) v *= w;
      for (auto& v : node.w_hess) v *= w;
      mass += node.w_rho;
      if (node.w_rho > 0.0) nodes_.push_back(std::move(node));
    }
    int a = d_ - 1;
    while (a >= 0 && ++idx[a] == q_) idx[a--] = 0;
    if (a < 0) break;
  }
  // Normalise the discrete rule so constants are reproduced exactly.
  for (auto& node : nodes_) {
    node.w_rho /= mass;
    for (auto& v : node.w_grad) v /= mass;
    for (auto& v : node.w_hess) v /= mass;
  }
}

double Mollifier::kernel(CSpan x) const { return norm_ * bump_profile(norm2(x)); }

void Mollifier::kernel_gradient(CSpan x, Span out) const {
  const double u = norm2(x);
  if (u >= 1.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double rho = norm_ * bump_profile(u);
  const double q = 1.0 - u;
  for (int k = 0; k < d_; ++k) out[k] = rho * (-2.0 * x[k] / (q * q));
}

void Mollifier::kernel_hessian(CSpan x, Span out) const {
  const double u = norm2(x);
  if (u >= 1.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double rho = norm_ * bump_profile(u);
  const double q = 1.0 - u;
  for (int k = 0; k < d_; ++k)
    for (int p = 0; p < d_; ++p) {
      const double xx = x[k] * x[p];
      out[k * d_ + p] =
          rho * (4.0 * xx / (q * q * q * q) - (k == p ? 2.0 / (q * q) : 0.0) - 8.0 * xx / (q * q * q));
    }
}

double Mollifier::cutoff_profile(double r) const {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  return 1.0 - integrate_gl(band_density, 1.0, r, 4, 16) / band_integral_;
}

double Mollifier::cutoff_profile_derivative(double r) const { return -band_density(r) / band_integral_; }

double Mollifier::cutoff_profile_second_derivative(double r) const {
  return -band_density_derivative(r) / band_integral_;
}

double Mollifier::cutoff(CSpan x) const { return cutoff_profile(std::sqrt(norm2(x))); }

double Mollifier::cutoff_gradient_sup() const { return band_density(1.5) / band_integral_; }

namespace {

class MollifiedEvaluator {
 public:
  MollifiedEvaluator(FieldPtr f, const Mollifier& m) : field(std::move(f)), moll(m) {}

  FieldPtr field;
  Mollifier moll;

  // Convolution data for a component getter: value S, gradient dS (c*d+k), Hessian.
  template <class Getter>
  void convolve(const Getter& get, std::size_t ncomp, CSpan x, int order, Span s, Span ds, Span dds) const {
    const int d = moll.dim();
    const double n = moll.level();
    std::fill(s.begin(), s.end(), 0.0);
    if (order >= 1) std::fill(ds.begin(), ds.end(), 0.0);
    if (order >= 2) std::fill(dds.begin(), dds.end(), 0.0);
    thread_local std::vector<double> y, val;
    y.resize(d);
    val.resize(ncomp);
    for (const auto& node : moll.nodes()) {
      for (int a = 0; a < d; ++a) y[a] = x[a] - node.u[a] / n;
      if (field->near_singularity(y)) continue;
      get(std::span<const double>(y), std::span<double>(val));
      for (std::size_t c = 0; c < ncomp; ++c) {
        const double v = val[c];
        s[c] += node.w_rho * v;
        if (order >= 1)
          for (int k = 0; k < d; ++k) ds[c * d + k] += n * node.w_grad[k] * v;
        if (order >= 2)
          for (int k = 0; k < d * d; ++k) dds[c * d * d + k] += n * n * node.w_hess[k] * v;
      }
    }
  }

  // chi_n and derivatives at x.
  void cutoff(CSpan x, int order, double& chi, Span dchi, Span ddchi) const {
    const int d = moll.dim();
    const double n = moll.level();
    const double r = std::sqrt(norm2(x));
    const double rho = r / n;
    chi = moll.cutoff_profile(rho);
    if (order >= 1) std::fill(dchi.begin(), dchi.end(), 0.0);
    if (order >= 2) std::fill(ddchi.begin(), ddchi.end(), 0.0);
    if (rho <= 1.0 || rho >= 2.0) return;
    const double p1 = moll.cutoff_profile_derivative(rho);
    if (order >= 1)
      for (int k = 0; k < d; ++k) dchi[k] = p1 * x[k] / (r * n);
    if (order >= 2) {
      const double p2 = moll.cutoff_profile_second_derivative(rho);
      for (int k = 0; k < d; ++k)
        for (int q = 0; q < d; ++q) {
          const double xx = x[k] * x[q] / (r * r);
          ddchi[k * d + q] = p2 * xx / (n * n) + p1 / (n * r) * ((k == q ? 1.0 : 0.0) - xx);
        }
    }
  }

  template <class Getter>
  void apply(const Getter& get, std::size_t ncomp, CSpan x, int order, Span out) const {
    const int d = moll.dim();
    const double r = std::sqrt(norm2(x));
    if (r >= 2.0 * moll.level()) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    thread_local std::vector<double> s, ds, dds, dchi, ddchi;
    s.resize(ncomp);
    ds.resize(ncomp * d);
    dds.resize(ncomp * d * d);
    dchi.resize(d);
    ddchi.resize(static_cast<std::size_t>(d) * d);
    double chi = 1.0;
    convolve(get, ncomp, x, order, s, ds, dds);
    cutoff(x, order, chi, dchi, ddchi);
    for (std::size_t c = 0; c < ncomp; ++c) {
      if (order == 0) {
        out[c] = s[c] * chi;
      } else if (order == 1) {
        for (int k = 0; k < d; ++k) out[c * d + k] = ds[c * d + k] * chi + s[c] * dchi[k];
      } else {
        for (int k = 0; k < d; ++k)
          for (int q = 0; q < d; ++q)
            out[(c * d + k) * d + q] = dds[(c * d + k) * d + q] * chi + ds[c * d + k] * dchi[q] +
                                       ds[c * d + q] * dchi[k] + s[c] * ddchi[k * d + q];
      }
    }
  }
};

}  // namespace

FieldPtr mollify(FieldPtr field, const Mollifier& mollifier) {
  if (mollifier.dim() != field->dim()) throw ValidationError("mollify", "mollifier dimension mismatch");
  const double n = mollifier.level();
  if (field->domain_radius < 2.0 * n + 1.0 / n)
    throw ValidationError("mollify", "field must be evaluable on |x| <= 2n + 1/n = " + std::to_string(2.0 * n + 1.0 / n));
  const int d = field->dim(), m = field->noise_dim();
  const std::size_t dm = static_cast<std::size_t>(d) * m;
  auto ev = std::make_shared<MollifiedEvaluator>(field, mollifier);
  auto b = [f = field](CSpan y, Span o) { f->drift(y, o); };
  auto s = [f = field](CSpan y, Span o) { f->diffusion(y, o); };
  CoefficientField::Callbacks cb;
  cb.drift = [ev, b, d](CSpan x, Span out) { ev->apply(b, d, x, 0, out); };
  cb.drift_jacobian = [ev, b, d](CSpan x, Span out) { ev->apply(b, d, x, 1, out); };
  if (field->constant_diffusion) {
    // sigma * rho_n = sigma inside; the cutoff still makes sigma_n space dependent.
  }
  cb.diffusion = [ev, s, dm](CSpan x, Span out) { ev->apply(s, dm, x, 0, out); };
  cb.diffusion_jacobian = [ev, s, dm](CSpan x, Span out) { ev->apply(s, dm, x, 1, out); };
  cb.diffusion_hessian = [ev, s, dm](CSpan x, Span out) { ev->apply(s, dm, x, 2, out); };
  auto out = std::make_shared<CoefficientField>(d, m, std::move(cb),
                                                field->name() + "*rho_" + std::to_string(mollifier.level()));
  out->fd_scale = 1.0 / n;
  return out;
}

// ---------------------------------------------------------------------------------

double en3_expression(const LocalJet& jet, double w) {
  return -jet.div_b() + 0.5 * jet.sigma_grad_contraction() + jet.sigma_hessian_contraction() +
         w * jet.div_sigma_norm2();
}

namespace {

std::string describe(const PointSet& grid) {
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = std::sqrt(norm2(grid.point(i)));
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  return std::to_string(grid.size()) + " points in d=" + std::to_string(grid.dim) + ", " +
         std::to_string(rmin) + " <= |x| <= " + std::to_string(rmax);
}

}  // namespace

GridSupReport check_en3(const CoefficientField& field, const PointSet& grid, double w, double tol) {
  GridSupReport rep;
  rep.condition = w == 1.0 ? "en3" : "en3_p_weighted";
  rep.grid_description = describe(grid);
  LocalJet jet(field.dim(), field.noise_dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.point(i);
    if (field.near_singularity(x)) {
      ++rep.points_rejected;
      continue;
    }
    jet.evaluate(field, x, LocalJet::second);
    const double v = en3_expression(jet, w);
    if (!std::isfinite(v)) {
      ++rep.points_rejected;
      continue;
    }
    ++rep.points_evaluated;
    if (v > rep.max_value) {
      rep.max_value = v;
      rep.argmax.assign(x.begin(), x.end());
    }
  }
  if (rep.points_evaluated == 0) throw SingularityError("check_en3: no grid point admits derivative data");
  rep.positive_part = std::max(rep.max_value, 0.0);
  rep.constant = rep.positive_part <= tol ? 0.0 : rep.positive_part;
  rep.holds = rep.positive_part <= tol;
  return rep;
}

CoercivityReport check_coercivity(const CoefficientField& field, const PointSet& grid, double tol) {
  CoercivityReport rep;
  std::vector<double> r2s, vals;
  std::vector<double> b(field.dim()), s(static_cast<std::size_t>(field.dim()) * field.noise_dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.point(i);
    if (field.near_singularity(x)) continue;
    field.drift(x, b);
    field.diffusion(x, s);
    const double v = dot(x, b) + norm2(s);
    if (!std::isfinite(v)) continue;
    r2s.push_back(norm2(x));
    vals.push_back(v);
  }
  rep.points_evaluated = vals.size();
  if (vals.empty()) throw ValidationError("check_coercivity", "no evaluable grid points");
  rep.max_value = *std::max_element(vals.begin(), vals.end());
  if (rep.max_value <= tol) {
    rep.nonpositive_branch = rep.holds = true;
    rep.message = "<x,b> + ||sigma||^2 <= 0 on the grid";
    return rep;
  }
  double mr = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    mr += r2s[i];
    mv += vals[i];
  }
  mr /= vals.size();
  mv /= vals.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    sxy += (r2s[i] - mr) * (vals[i] - mv);
    sxx += (r2s[i] - mr) * (r2s[i] - mr);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  rep.c1 = -slope;
  if (!(rep.c1 > tol)) {
    rep.c1 = 0.0;
    rep.message = "coercivity fails: <x,b> + ||sigma||^2 is positive and does not decay like -C1|x|^2";
    return rep;
  }
  double c2 = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vals.size(); ++i) c2 = std::max(c2, vals[i] + rep.c1 * r2s[i]);
  rep.c2 = std::max(c2, 0.0);
  rep.affine_branch = rep.holds = true;
  rep.message = "<x,b> + ||sigma||^2 <= -C1|x|^2 + C2 on the grid";
  return rep;
}

GridSupReport check_growth_en4(const CoefficientField& field, const PointSet& grid) {
  GridSupReport rep;
  rep.condition = "en4";
  rep.grid_description = describe(grid);
  std::vector<double> b(field.dim()), s(static_cast<std::size_t>(field.dim()) * field.noise_dim());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.point(i);
    if (field.near_singularity(x)) {
      ++rep.points_rejected;
      continue;
    }
    field.drift(x, b);
    field.diffusion(x, s);
    const double v = (dot(x, b) + 2.0 * norm2(s)) / (norm2(x) + 1.0);
    if (!std::isfinite(v)) {
      ++rep.points_rejected;
      continue;
    }
    ++rep.points_evaluated;
    if (v > rep.max_value) {
      rep.max_value = v;
      rep.argmax.assign(x.begin(), x.end());
    }
  }
  rep.positive_part = std::max(rep.max_value, 0.0);
  rep.constant = rep.positive_part;
  rep.holds = rep.points_evaluated > 0 && std::isfinite(rep.constant);
  return rep;
}

GridSupReport check_si(const CoefficientField& field, const PointSet& grid) {
  GridSupReport rep;
  rep.condition = "si";
  rep.grid_description = describe(grid);
  const int d = field.dim(), m = field.noise_dim();
  const Lattice unit = Lattice::cube(d, 1.0, 8);
  std::vector<std::vector<double>> offsets;
  for (std::size_t i = 0; i < unit.size(); ++i) {
    auto z = unit.node(i);
    if (norm2(z) <= 1.0) offsets.push_back(std::move(z));
  }
  offsets.push_back(std::vector<double>(d, 0.0));
  LocalJet jet(d, m);
  std::vector<double> y(d), s(static_cast<std::size_t>(d) * m);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.point(i);
    if (field.near_singularity(x)) {
      ++rep.points_rejected;
      continue;
    }
    jet.evaluate(field, x, LocalJet::second);
    double g2 = 0.0;
    for (int l = 0; l < m; ++l)
      for (int k = 0; k < d; ++k) {
        double v = 0.0;
        for (int ii = 0; ii < d; ++ii) v += jet.hess_sigma[((ii * m + l) * d + ii) * d + k];
        g2 += v * v;
      }
    double smax = 0.0;
    for (const auto& z : offsets) {
      for (int a = 0; a < d; ++a) y[a] = x[a] - z[a];
      if (field.near_singularity(y)) continue;
      field.diffusion(y, s);
      smax = std::max(smax, std::sqrt(norm2(s)));
    }
    const double v = smax * std::sqrt(g2);
    ++rep.points_evaluated;
    if (v > rep.max_value) {
      rep.max_value = v;
      rep.argmax.assign(x.begin(), x.end());
    }
  }
  rep.positive_part = std::max(rep.max_value, 0.0);
  rep.constant = rep.positive_part;
  rep.holds = std::isfinite(rep.constant);
  return rep;
}

std::pair<double, double> field_distance(const CoefficientField& f, const CoefficientField& g, const PointSet& grid) {
  const int d = f.dim();
  const std::size_t dm = static_cast<std::size_t>(d) * f.noise_dim();
  std::vector<double> bf(d), bg(d), sf(dm), sg(dm);
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.point(i);
    if (f.near_singularity(x) || g.near_singularity(x)) continue;
    f.drift(x, bf);
    g.drift(x, bg);
    f.diffusion(x, sf);
    g.diffusion(x, sg);
    double db = 0.0, ds = 0.0;
    for (int a = 0; a < d; ++a) db += (bf[a] - bg[a]) * (bf[a] - bg[a]);
    for (std::size_t c = 0; c < dm; ++c) ds += (sf[c] - sg[c]) * (sf[c] - sg[c]);
    l1 += grid.cell_mass * std::sqrt(db);
    l2 += grid.cell_mass * ds;
  }
  return {l1, std::sqrt(l2)};
}

}  // namespace aeflow
