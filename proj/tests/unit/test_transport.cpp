#include <cmath>
#include <cstring>
#include <memory>

#include "aeflow/presets.hpp"
#include "aeflow/transport.hpp"
#include "doctest.h"

using namespace aeflow;

namespace {

std::shared_ptr<const NoiseBundle> bundle(std::uint64_t seed, int m, double T, double dt) {
  return std::make_shared<const NoiseBundle>(generate(seed, m, TimeGrid::from_horizon(T, dt), 1));
}

const std::vector<double> kV{0.5, -0.25}, kS{0.4, 0.1, 0.0, 0.3};

FunctionBank small_bank() {
  return {TestFunction::bump({0.0, 0.0}, 1.5), TestFunction::bump({0.5, -0.5}, 1.0),
          TestFunction::poly_bump({1, 0}, {0.0, 0.0}, 1.5)};
}

}  // namespace

TEST_SUITE("transport") {
  TEST_CASE("affine exact solution at lattice nodes") {
    const auto f = constant_field(kV, kS, 2);
    const auto grid = lattice_points(Lattice::cube(2, 3.0, 20));
    const auto noise = bundle(1, 2, 0.25, 2.5e-3);
    const auto u0 = InitialDatum::gaussian({0.0, 0.0}, 0.7);
    const auto sol = solve_by_characteristics(f, noise, u0, grid, {0, 50, 100});
    double err = 0.0;
    for (std::size_t s = 0; s < sol.save_steps.size(); ++s) {
      const auto w = noise->path_at(sol.save_steps[s]);
      const double t = sol.time(s);
      for (std::size_t q = 0; q < grid.size(); ++q) {
        const auto x = grid.point(q);
        std::vector<double> y{x[0] - kV[0] * t - kS[0] * w[0] - kS[1] * w[1],
                              x[1] - kV[1] * t - kS[2] * w[0] - kS[3] * w[1]};
        err = std::max(err, std::abs(sol.values[s][q] - u0.value(y)));
      }
    }
    CHECK(err < 1e-12);
    CHECK(sol.max_principle);
  }

  TEST_CASE("max principle on a nonlinear field") {
    const auto grid = lattice_points(Lattice::cube(2, 2.0, 16));
    for (const auto& u0 : {InitialDatum::bump({0.3, 0.0}, 1.0), InitialDatum::indicator_box({-0.5, -0.5}, {0.5, 0.5})}) {
      const auto sol = solve_by_characteristics(smooth_field(2), bundle(2, 2, 0.2, 1e-2), u0, grid, {0, 10, 20});
      CHECK(sol.max_principle);
      CHECK(sol.max_principle_violations == 0);
      for (auto r : {Renormalization::identity, Renormalization::square, Renormalization::sine})
        for (const auto& v : sol.renormalized(r).values)
          for (double x : v) CHECK(std::abs(x) <= 1.0 + 1e-15);
    }
  }

  TEST_CASE("renormalisation maps") {
    CHECK(renormalize(Renormalization::none, 3.0) == 3.0);
    CHECK(renormalize(Renormalization::identity, 1.0) == doctest::Approx(std::atan(1.0)));
    CHECK(renormalize(Renormalization::square, 1.0) == doctest::Approx(std::atan(1.0) * std::atan(1.0)));
    CHECK(parse_renormalization(renormalization_name(Renormalization::sine)) == Renormalization::sine);
    CHECK_THROWS_AS(parse_renormalization("cube"), ValidationError);
  }

  TEST_CASE("translation preserves level-set mass") {
    const auto f = constant_field(kV, kS, 2);
    const auto grid = lattice_points(Lattice::cube(2, 4.0, 160));
    const auto u0 = InitialDatum::indicator_box({-1.0, -1.0}, {1.0, 0.5});
    const auto sol = solve_by_characteristics(f, bundle(3, 2, 0.5, 1e-2), u0, grid, {0, 50});
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t q = 0; q < grid.size(); ++q) {
      m0 += (sol.values[0][q] > 0.5) * grid.cell_mass;
      m1 += (sol.values[1][q] > 0.5) * grid.cell_mass;
    }
    CHECK(m0 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::abs(m1 - m0) < 0.1);
  }

  TEST_CASE("weak form residual is small and decays") {
    const auto f = constant_field(kV, kS, 2);
    const auto grid = lattice_points(Lattice::cube(2, 3.0, 40));
    const auto u0 = InitialDatum::gaussian({0.0, 0.0}, 0.7);
    const auto sol = solve_by_characteristics(f, bundle(4, 2, 0.25, 2.5e-3), u0, grid);
    const auto rep = weak_form_residual(sol, *f, small_bank(), 0.25);
    CHECK(rep.rows.size() == 3);
    CHECK(rep.max_residual < 0.05);
    const auto ref = weak_form_refinement(f, {1, 2, 3, 4}, u0, grid, 0.25, 2.5e-3, {4, 2, 1}, small_bank());
    REQUIRE(ref.levels.size() == 3);
    CHECK(ref.observed_order > 0.3);
  }

  TEST_CASE("weak form rejects unsuitable test functions") {
    const auto f = constant_field(kV, kS, 2);
    const auto grid = lattice_points(Lattice::cube(2, 3.0, 20));
    const auto sol = solve_by_characteristics(f, bundle(4, 2, 0.1, 1e-2), InitialDatum::bump({0.0, 0.0}, 1.0), grid);
    CHECK_THROWS_AS(weak_form_residual(sol, *f, {TestFunction::constant_one(2)}, 0.1), ValidationError);
    CHECK_THROWS_AS(weak_form_residual(sol, *f, {TestFunction::bump({2.5, 0.0}, 1.0)}, 0.1), ValidationError);
    CHECK_THROWS_AS(weak_form_residual(sol, *smooth_field(2), small_bank(), 0.1), ValidationError);
  }

  TEST_CASE("backward kolmogorov equals forward integration on the shifted path") {
    const auto f = smooth_field(2);
    const auto grid = lattice_points(Lattice::cube(2, 1.0, 6));
    const auto noise = bundle(5, 2, 0.5, 1e-2);
    const auto v0 = [](std::span<const double> x) { return std::sin(x[0]) + x[1] * x[1]; };
    const auto ks = backward_kolmogorov(*f, noise, v0, grid, 0.5, {0.0, 0.2, 0.5});
    REQUIRE(ks.values.size() == 3);
    auto shifted = std::make_shared<const NoiseBundle>(shift_steps(*noise, 20));
    const auto fwd = integrate_forward(*f, shifted, grid);
    for (std::size_t q = 0; q < grid.size(); ++q) {
      CHECK(std::memcmp(&ks.endpoints[1][q * 2], fwd.final_position(q).data(), 2 * sizeof(double)) == 0);
      CHECK(ks.values[1][q] == v0(fwd.final_position(q)));
      CHECK(ks.values[2][q] == v0(grid.point(q)));
    }
  }

  TEST_CASE("parabolic mean needs enough solutions") {
    PointSet ps;
    ps.dim = 1;
    ps.coords = {0.0};
    const auto f = constant_field({0.0}, {1.0}, 1);
    std::vector<TransportSolution> sols;
    for (std::uint64_t s = 1; s <= 4; ++s)
      sols.push_back(solve_by_characteristics(f, bundle(s, 1, 0.5, 1e-2), InitialDatum::indicator_box({-1.0}, {1.0}), ps,
                                              {0, 50}));
    CHECK_THROWS_AS(parabolic_mean(sols), ValidationError);
    for (std::uint64_t s = 5; s <= 64; ++s)
      sols.push_back(solve_by_characteristics(f, bundle(s, 1, 0.5, 1e-2), InitialDatum::indicator_box({-1.0}, {1.0}), ps,
                                              {0, 50}));
    const auto pm = parabolic_mean(sols);
    CHECK(pm.mean[0][0] == 1.0);
    CHECK(std::abs(pm.mean[1][0] - std::erf(1.0)) < 4.0 * pm.standard_error[1][0]);
  }
}
