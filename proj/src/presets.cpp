#include "aeflow/presets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace aeflow {

using CSpan = std::span<const double>;
using Span = std::span<double>;

double example_beta_threshold(int d) { return (4.0 * d * d + 5.0 * d) / (d - 2.0); }

FieldPtr example_field(int d, double beta, std::optional<int> level) {
  if (d < 3) throw ValidationError("preset.d", "the radial example needs d >= 3");
  if (level && *level <= 0) throw ValidationError("preset.n", "level must be >= 1");
  const double e = level ? 1.0 / *level : 0.0;
  const int m = d;
  CoefficientField::Callbacks cb;
  cb.drift = [=](CSpan x, Span out) {
    const double s = norm2(x) + e;
    for (int i = 0; i < d; ++i) out[i] = beta * x[i] / s;
  };
  cb.diffusion = [=](CSpan x, Span out) {
    const double s = norm2(x) + e;
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < m; ++l) out[i * m + l] = x[i] * x[l] / s;
  };
  cb.drift_jacobian = [=](CSpan x, Span out) {
    const double s = norm2(x) + e;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out[i * d + j] = beta * ((i == j ? 1.0 / s : 0.0) - 2.0 * x[i] * x[j] / (s * s));
  };
  cb.diffusion_jacobian = [=](CSpan x, Span out) {
    const double s = norm2(x) + e;
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < m; ++l)
        for (int k = 0; k < d; ++k) {
          const double lin = (i == k ? x[l] : 0.0) + (l == k ? x[i] : 0.0);
          out[(i * m + l) * d + k] = lin / s - 2.0 * x[i] * x[l] * x[k] / (s * s);
        }
  };
  cb.diffusion_hessian = [=](CSpan x, Span out) {
    const double s = norm2(x) + e;
    const double s2 = s * s, s3 = s2 * s;
    auto dl = [](int a, int b) { return a == b ? 1.0 : 0.0; };
    for (int i = 0; i < d; ++i)
      for (int l = 0; l < m; ++l)
        for (int k = 0; k < d; ++k)
          for (int p = 0; p < d; ++p) {
            const double t0 = (dl(i, k) * dl(l, p) + dl(i, p) * dl(l, k)) / s;
            const double t1 = -2.0 * (dl(i, k) * x[l] + x[i] * dl(l, k)) * x[p] / s2;
            const double t2 =
                -2.0 * (dl(i, p) * x[l] * x[k] + x[i] * dl(l, p) * x[k] + x[i] * x[l] * dl(k, p)) / s2;
            const double t3 = 8.0 * x[i] * x[l] * x[k] * x[p] / s3;
            out[((i * m + l) * d + k) * d + p] = t0 + t1 + t2 + t3;
          }
  };
  std::string name = "example_sec6(d=" + std::to_string(d) + ")";
  if (level) name += "_n" + std::to_string(*level);
  auto f = std::make_shared<CoefficientField>(d, m, std::move(cb), name);
  if (!level) f->singularities.push_back({std::vector<double>(d, 0.0), 0.0});
  return f;
}

namespace radial_example {

double div_b(int d, double beta, double n, double r2) {
  const double s = r2 + 1.0 / n;
  return beta * (d - 2) / s + 2.0 * beta / (n * s * s);
}

double div_sigma_norm2(int d, double n, double r2) {
  const double s = r2 + 1.0 / n;
  const double a = (d - 1) * r2 + (d + 1) / n;
  return a * a * r2 / (s * s * s * s);
}

double grad_contraction(int d, double n, double r2) {
  const double s = r2 + 1.0 / n;
  return ((d + 3) * r2 * s * s - 8.0 * r2 * r2 / n - 4.0 * r2 * r2 * r2) / (s * s * s * s);
}

double hessian_contraction(int d, double n, double r2) {
  const double s = r2 + 1.0 / n;
  return (3.0 * (d - 1) * r2 * r2 + (d + 1) * r2 / n) / (s * s * s) -
         4.0 * r2 * r2 * ((d - 1) * r2 + (d + 1) / n) / (s * s * s * s);
}

double termwise_envelope(int d, double beta, double n, double r2) {
  return (-beta * (d - 2) + 0.5 * (d + 3) + (4.0 * d - 2.0) + 4.0 * d * d) / (r2 + 1.0 / n);
}

}  // namespace radial_example

FieldPtr constant_field(std::vector<double> v, std::vector<double> sigma, int m) {
  const int d = static_cast<int>(v.size());
  if (sigma.size() != static_cast<std::size_t>(d) * m)
    throw ValidationError("preset.sigma", "expected a d x m matrix");
  CoefficientField::Callbacks cb;
  cb.drift = [v](CSpan, Span out) { std::copy(v.begin(), v.end(), out.begin()); };
  cb.diffusion = [sigma](CSpan, Span out) { std::copy(sigma.begin(), sigma.end(), out.begin()); };
  cb.drift_jacobian = [](CSpan, Span out) { std::fill(out.begin(), out.end(), 0.0); };
  cb.diffusion_jacobian = [](CSpan, Span out) { std::fill(out.begin(), out.end(), 0.0); };
  cb.diffusion_hessian = [](CSpan, Span out) { std::fill(out.begin(), out.end(), 0.0); };
  auto f = std::make_shared<CoefficientField>(d, m, std::move(cb), "constant");
  f->constant_diffusion = true;
  return f;
}

FieldPtr linear_field(std::vector<double> a, std::vector<double> sigma, int m) {
  const auto d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(a.size()))));
  if (static_cast<std::size_t>(d) * d != a.size()) throw ValidationError("preset.A", "expected a square matrix");
  if (sigma.size() != static_cast<std::size_t>(d) * m)
    throw ValidationError("preset.sigma", "expected a d x m matrix");
  CoefficientField::Callbacks cb;
  cb.drift = [a, d](CSpan x, Span out) {
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += a[i * d + j] * x[j];
      out[i] = s;
    }
  };
  cb.diffusion = [sigma](CSpan, Span out) { std::copy(sigma.begin(), sigma.end(), out.begin()); };
  cb.drift_jacobian = [a](CSpan, Span out) { std::copy(a.begin(), a.end(), out.begin()); };
  cb.diffusion_jacobian = [](CSpan, Span out) { std::fill(out.begin(), out.end(), 0.0); };
  cb.diffusion_hessian = [](CSpan, Span out) { std::fill(out.begin(), out.end(), 0.0); };
  auto f = std::make_shared<CoefficientField>(d, m, std::move(cb), "linear");
  f->constant_diffusion = true;
  return f;
}

FieldPtr ou_field(int d) {
  std::vector<double> a(static_cast<std::size_t>(d) * d, 0.0), s(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) {
    a[i * d + i] = -1.0;
    s[i * d + i] = std::sqrt(2.0);
  }
  auto f = linear_field(std::move(a), std::move(s), d);
  auto g = std::make_shared<CoefficientField>(d, d, f->callbacks(), "ou");
  g->constant_diffusion = true;
  return g;
}

FieldPtr rotation_field() {
  auto f = linear_field({-0.1, -1.0, 1.0, -0.1}, {0.1, 0.0, 0.0, 0.1}, 2);
  auto g = std::make_shared<CoefficientField>(2, 2, f->callbacks(), "rotation");
  g->constant_diffusion = true;
  return g;
}

FieldPtr smooth_field(int d) {
  if (d < 1) throw ValidationError("preset.d", "must be >= 1");
  const int m = d;
  CoefficientField::Callbacks cb;
  cb.drift = [d](CSpan x, Span out) {
    for (int i = 0; i < d; ++i) out[i] = -x[i] + 0.5 * std::sin(x[(i + 1) % d]);
  };
  cb.drift_jacobian = [d](CSpan x, Span out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < d; ++i) {
      out[i * d + i] += -1.0;
      out[i * d + (i + 1) % d] += 0.5 * std::cos(x[(i + 1) % d]);
    }
  };
  cb.diffusion = [d, m](CSpan x, Span out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < d; ++i) out[i * m + i] = 0.3 * (1.0 + 0.5 * std::cos(x[i]));
  };
  cb.diffusion_jacobian = [d, m](CSpan x, Span out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < d; ++i) out[(i * m + i) * d + i] = -0.15 * std::sin(x[i]);
  };
  cb.diffusion_hessian = [d, m](CSpan x, Span out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < d; ++i) out[((i * m + i) * d + i) * d + i] = -0.15 * std::cos(x[i]);
  };
  return std::make_shared<CoefficientField>(d, m, std::move(cb), "smooth_lipschitz");
}

// ---------------------------------------------------------------------------------

namespace {

struct GridSamples {
  int d = 0, m = 0;
  std::vector<std::vector<double>> axes;
  std::vector<std::size_t> strides;
  std::vector<double> b, s;  // per node, d and d*m values
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  return out;
}

GridSamples parse_grid(std::istream& in) {
  GridSamples g;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv(line);
    break;
  }
  for (const auto& h : header) {
    if (h.size() >= 2 && h[0] == 'x') ++g.d;
    if (h.size() >= 2 && h[0] == 's') ++g.m;
  }
  if (g.d == 0 || header.size() != static_cast<std::size_t>(2 * g.d + g.m))
    throw ValidationError("user_grid.header", "expected columns x*, b*, s*");
  if (g.m % g.d != 0) throw ValidationError("user_grid.header", "sigma column count must be d*m");
  g.m /= g.d;
  const std::size_t ncol = header.size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv(line);
    if (cells.size() != ncol) throw ValidationError("user_grid.row", "wrong column count in: " + line);
    std::vector<double> r(ncol);
    for (std::size_t c = 0; c < ncol; ++c) r[c] = std::stod(cells[c]);
    rows.push_back(std::move(r));
  }
  g.axes.resize(g.d);
  for (int a = 0; a < g.d; ++a) {
    for (const auto& r : rows) g.axes[a].push_back(r[a]);
    std::sort(g.axes[a].begin(), g.axes[a].end());
    g.axes[a].erase(std::unique(g.axes[a].begin(), g.axes[a].end()), g.axes[a].end());
    if (g.axes[a].size() < 2) throw ValidationError("user_grid", "each axis needs at least two grid values");
  }
  g.strides.assign(g.d, 1);
  std::size_t total = 1;
  for (int a = g.d - 1; a >= 0; --a) {
    g.strides[a] = total;
    total *= g.axes[a].size();
  }
  if (rows.size() != total) throw ValidationError("user_grid", "rows do not form a full tensor grid");
  const std::size_t dm = static_cast<std::size_t>(g.d) * g.m;
  g.b.assign(total * g.d, std::nan(""));
  g.s.assign(total * dm, std::nan(""));
  for (const auto& r : rows) {
    std::size_t flat = 0;
    for (int a = 0; a < g.d; ++a) {
      const auto it = std::lower_bound(g.axes[a].begin(), g.axes[a].end(), r[a]);
      flat += static_cast<std::size_t>(it - g.axes[a].begin()) * g.strides[a];
    }
    for (int i = 0; i < g.d; ++i) g.b[flat * g.d + i] = r[g.d + i];
    for (std::size_t c = 0; c < dm; ++c) g.s[flat * dm + c] = r[2 * g.d + c];
  }
  for (double v : g.b)
    if (std::isnan(v)) throw ValidationError("user_grid", "duplicate or missing grid nodes");
  return g;
}

// Multilinear interpolation of `values` (ncomp per node) at x, clamped to the box.
void interpolate(const GridSamples& g, const std::vector<double>& values, std::size_t ncomp, CSpan x, Span out) {
  const int d = g.d;
  std::vector<std::size_t> lo(d);
  std::vector<double> frac(d);
  for (int a = 0; a < d; ++a) {
    const auto& ax = g.axes[a];
    const double v = std::clamp(x[a], ax.front(), ax.back());
    std::size_t k = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), v) - ax.begin());
    k = std::clamp<std::size_t>(k, 1, ax.size() - 1) - 1;
    lo[a] = k;
    frac[a] = (v - ax[k]) / (ax[k + 1] - ax[k]);
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (unsigned corner = 0; corner < (1u << d); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < d; ++a) {
      const bool up = (corner >> a) & 1u;
      w *= up ? frac[a] : 1.0 - frac[a];
      flat += (lo[a] + (up ? 1 : 0)) * g.strides[a];
    }
    if (w == 0.0) continue;
    for (std::size_t c = 0; c < ncomp; ++c) out[c] += w * values[flat * ncomp + c];
  }
}

FieldPtr field_from_samples(std::shared_ptr<const GridSamples> g, const std::string& name) {
  const std::size_t dm = static_cast<std::size_t>(g->d) * g->m;
  CoefficientField::Callbacks cb;
  cb.drift = [g](CSpan x, Span out) { interpolate(*g, g->b, g->d, x, out); };
  cb.diffusion = [g, dm](CSpan x, Span out) { interpolate(*g, g->s, dm, x, out); };
  auto f = std::make_shared<CoefficientField>(g->d, g->m, std::move(cb), name);
  double h = std::numeric_limits<double>::infinity();
  for (const auto& ax : g->axes)
    for (std::size_t k = 1; k < ax.size(); ++k) h = std::min(h, ax[k] - ax[k - 1]);
  f->fd_scale = std::min(1.0, h);
  return f;
}

}  // namespace

FieldPtr user_grid_field(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw ValidationError("user_grid.path", "cannot open " + csv.string());
  auto g = std::make_shared<const GridSamples>(parse_grid(in));
  return field_from_samples(g, "user_grid(" + csv.filename().string() + ")");
}

FieldPtr user_grid_field_from_string(const std::string& csv_text, const std::string& name) {
  std::istringstream in(csv_text);
  auto g = std::make_shared<const GridSamples>(parse_grid(in));
  return field_from_samples(g, name);
}

std::vector<PresetInfo> list_presets() {
  return {
      {"example_sec6", "radial singular drift example (d >= 3, beta >= (4d^2+5d)/(d-2))",
       "b = beta x/|x|^2, sigma = x x^T/|x|^2; with n, the regularisation |x|^2 -> |x|^2 + 1/n"},
      {"constant", "affine characteristics", "b = v, sigma = S"},
      {"linear", "linear SDE with closed-form flow and Jacobian", "b = A x, sigma = S"},
      {"ou", "coercivity condition <x,b> + |sigma|^2 <= -C1|x|^2 + C2",
       "Ornstein-Uhlenbeck b = -x, sigma = sqrt(2) I, stationary law N(0, I)"},
      {"rotation", "coercive rotation with radial pull", "b = (-x2, x1) - 0.1 x, sigma = 0.1 I"},
      {"smooth_lipschitz", "smooth Lipschitz coefficients with state-dependent noise",
       "b^i = -x^i + 0.5 sin x^{i+1}, sigma^{ii} = 0.3(1 + 0.5 cos x^i)"},
      {"user_grid", "grid-sampled field, multilinear interpolation", "CSV columns x*, b*, s*"},
  };
}

}  // namespace aeflow
