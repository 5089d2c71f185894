#include <cmath>
#include <vector>

#include "aeflow/coeff.hpp"
#include "aeflow/presets.hpp"
#include "doctest.h"

using namespace aeflow;

namespace {

LocalJet jet_at(const CoefficientField& f, std::vector<double> x) {
  LocalJet jet(f.dim(), f.noise_dim());
  jet.evaluate(f, x, LocalJet::second);
  return jet;
}

}  // namespace

TEST_SUITE("coeff") {
  // Values computed symbolically (sympy, exact rationals evaluated to double) from
  // b = beta x / (|x|^2 + 1/n), sigma = x x^T / (|x|^2 + 1/n), independent of the code.
  TEST_CASE("radial example jet matches the symbolic oracle") {
    const auto f = example_field(3, 51.0, 10);
    const auto jet = jet_at(*f, {0.3, -0.7, 1.1});
    CHECK(jet.div_b() == doctest::Approx(29.839590157050475).epsilon(1e-12));
    CHECK(jet.sigma_grad_contraction() == doctest::Approx(1.0078229141637813).epsilon(1e-12));
    CHECK(jet.sigma_hessian_contraction() == doctest::Approx(-1.0440159922871988).epsilon(1e-12));
    CHECK(jet.div_sigma_norm2() == doctest::Approx(2.2221427701789986).epsilon(1e-12));
    CHECK(en3_expression(jet) == doctest::Approx(-28.157551922076784).epsilon(1e-12));
  }

  TEST_CASE("radial example closed forms at a unit point") {
    const double r2 = 1.0;
    CHECK(radial_example::div_b(3, 51.0, 1.0, r2) == doctest::Approx(51.0));
    CHECK(radial_example::grad_contraction(3, 1.0, r2) == doctest::Approx(0.75));
    CHECK(radial_example::hessian_contraction(3, 1.0, r2) == doctest::Approx(-0.25));
    CHECK(radial_example::div_sigma_norm2(3, 1.0, r2) == doctest::Approx(2.25));
    const auto jet = jet_at(*example_field(3, 51.0, 1), {1.0, 0.0, 0.0});
    CHECK(jet.div_b() == doctest::Approx(51.0).epsilon(1e-13));
    CHECK(jet.sigma_grad_contraction() == doctest::Approx(0.75).epsilon(1e-13));
    CHECK(jet.sigma_hessian_contraction() == doctest::Approx(-0.25).epsilon(1e-13));
    CHECK(jet.div_sigma_norm2() == doctest::Approx(2.25).epsilon(1e-13));
  }

  TEST_CASE("tensor jet agrees with the scalar closed forms") {
    for (int d : {3, 4, 5})
      for (int n : {1, 7, 100}) {
        const double beta = example_beta_threshold(d) + 1.0;
        const auto f = example_field(d, beta, n);
        const auto ps = sample_shell(d, 0.01, 4.0, 50, 3 + d);
        for (std::size_t i = 0; i < ps.size(); ++i) {
          const auto x = ps.point(i);
          const auto jet = jet_at(*f, {x.begin(), x.end()});
          const double r2 = norm2(x);
          CHECK(jet.div_b() == doctest::Approx(radial_example::div_b(d, beta, n, r2)).epsilon(1e-11));
          CHECK(jet.sigma_grad_contraction() ==
                doctest::Approx(radial_example::grad_contraction(d, n, r2)).epsilon(1e-11));
          CHECK(jet.sigma_hessian_contraction() ==
                doctest::Approx(radial_example::hessian_contraction(d, n, r2)).epsilon(1e-11));
          CHECK(jet.div_sigma_norm2() == doctest::Approx(radial_example::div_sigma_norm2(d, n, r2)).epsilon(1e-11));
          CHECK(en3_expression(jet) <= radial_example::termwise_envelope(d, beta, n, r2) + 1e-9);
        }
      }
  }

  TEST_CASE("analytic derivatives agree with finite differences") {
    for (const auto& f : {smooth_field(3), example_field(3, 51.0, 4), rotation_field()}) {
      const int d = f->dim(), m = f->noise_dim();
      CoefficientField::Callbacks cb = f->callbacks();
      cb.drift_jacobian = nullptr;
      cb.diffusion_jacobian = nullptr;
      cb.diffusion_hessian = nullptr;
      const CoefficientField fd(d, m, cb, "fd");
      const std::vector<double> x(d, 0.37);
      const auto a = jet_at(*f, x), b = jet_at(fd, x);
      for (std::size_t i = 0; i < a.grad_b.size(); ++i) CHECK(a.grad_b[i] == doctest::Approx(b.grad_b[i]).epsilon(1e-6));
      for (std::size_t i = 0; i < a.grad_sigma.size(); ++i)
        CHECK(a.grad_sigma[i] == doctest::Approx(b.grad_sigma[i]).epsilon(1e-6));
      for (std::size_t i = 0; i < a.hess_sigma.size(); ++i)
        CHECK(a.hess_sigma[i] == doctest::Approx(b.hess_sigma[i]).epsilon(1e-4).scale(1.0));
    }
  }

  TEST_CASE("singular queries are rejected") {
    const auto f = example_field(3, 51.0);
    LocalJet jet(3, 3);
    std::vector<double> x{1e-9, 0.0, 0.0};
    CHECK_THROWS_AS(jet.evaluate(*f, x, LocalJet::first), SingularityError);
    x = {0.5, 0.0, 0.0};
    CHECK_NOTHROW(jet.evaluate(*f, x, LocalJet::second));
  }

  TEST_CASE("en3 constant vanishes for admissible beta") {
    for (int d : {3, 4})
      for (double extra : {0.0, 10.0})
        for (int n : {1, 5, 50}) {
          const double beta = example_beta_threshold(d) + extra;
          const auto grid = sample_shell(d, 1e-3, 5.0, 2000, 17);
          const auto rep = check_en3(*example_field(d, beta, n), grid);
          CHECK(rep.holds);
          CHECK(rep.constant == 0.0);
          CHECK(rep.points_rejected == 0);
        }
    CHECK(example_beta_threshold(3) == doctest::Approx(51.0));
  }

  TEST_CASE("coercivity of the OU preset") {
    const auto grid = lattice_points(Lattice::cube(2, 4.0, 21));
    const auto rep = check_coercivity(*ou_field(2), grid);
    CHECK(rep.holds);
    CHECK(rep.affine_branch);
    CHECK(rep.c1 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.c2 == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(check_coercivity(*example_field(3, 51.0, 1), sample_shell(3, 0.1, 3.0, 200, 1)).holds == false);
  }

  TEST_CASE("mollification is linear in the field") {
    const auto f = smooth_field(2), g = ou_field(2);
    const Mollifier mol(2, 2);
    const auto lhs = mollify(linear_combination(0.75, f, g), mol);
    const auto mf = mollify(f, mol), mg = mollify(g, mol);
    const auto ps = lattice_points(Lattice::cube(2, 3.0, 9));
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto x = ps.point(i);
      const auto a = lhs->drift(x), bf = mf->drift(x), bg = mg->drift(x);
      const auto sa = lhs->diffusion(x), sf = mf->diffusion(x), sg = mg->diffusion(x);
      for (int k = 0; k < 2; ++k) CHECK(std::abs(a[k] - (0.75 * bf[k] + bg[k])) < 1e-12);
      for (std::size_t k = 0; k < sa.size(); ++k) CHECK(std::abs(sa[k] - (0.75 * sf[k] + sg[k])) < 1e-12);
    }
  }

  TEST_CASE("mollified drift converges on a ball") {
    const auto f = smooth_field(2);
    auto grid = restrict_to_shell(lattice_points(Lattice::cube(2, 2.0, 40)), 0.0, 2.0);
    const auto zero = constant_field({0.0, 0.0}, {0.0, 0.0, 0.0, 0.0}, 2);
    const double norm = field_distance(*f, *zero, grid).first;
    double prev = std::numeric_limits<double>::infinity();
    double last = 0.0;
    for (int n : {1, 2, 4, 8, 16}) {
      last = field_distance(*mollify(f, Mollifier(2, n)), *f, grid).first;
      CHECK(last < prev * 1.05);
      prev = last;
    }
    CHECK(last < 1e-3 * norm);
  }

  TEST_CASE("mollification preserves linear growth") {
    const auto f = smooth_field(2);
    const Mollifier mol(2, 1);
    const auto fn = mollify(f, mol);
    const auto ps = lattice_points(Lattice::cube(2, 5.0, 41));
    double gf = 0.0, gn = 0.0;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto x = ps.point(i);
      const double w = 1.0 + std::sqrt(norm2(x));
      gf = std::max(gf, std::sqrt(norm2(f->drift(x))) / w);
      gn = std::max(gn, std::sqrt(norm2(fn->drift(x))) / w);
    }
    CHECK(gn <= gf * (1.0 + 2.0 * mol.cutoff_gradient_sup()));
  }

  TEST_CASE("mollifier kernel and cutoff") {
    const Mollifier mol(3, 4);
    double mass = 0.0;
    for (const auto& node : mol.nodes()) mass += node.w_rho;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> in{0.5, 0.0, 0.0}, out{2.5, 0.0, 0.0};
    CHECK(mol.cutoff(in) == 1.0);
    CHECK(mol.cutoff(out) == 0.0);
    CHECK(mol.cutoff_profile(1.5) > 0.0);
    CHECK(mol.cutoff_profile(1.5) < 1.0);
  }

  TEST_CASE("preset catalog") {
    const auto presets = list_presets();
    REQUIRE_FALSE(presets.empty());
    bool example = false, ou = false;
    for (const auto& p : presets) {
      example = example || p.name == "example_sec6";
      ou = ou || p.name == "ou";
    }
    CHECK(example);
    CHECK(ou);
  }

  TEST_CASE("user grid field interpolates multilinearly") {
    const std::string csv =
        "x0,b0,s00\n"
        "0,0,1\n"
        "1,2,1\n"
        "2,4,1\n";
    const auto f = user_grid_field_from_string(csv);
    const std::vector<double> x{0.25};
    CHECK(f->drift(x)[0] == doctest::Approx(0.5));
    CHECK(f->diffusion(x)[0] == doctest::Approx(1.0));
  }
}
