#include <cmath>
#include <memory>

#include "aeflow/presets.hpp"
#include "aeflow/stability.hpp"
#include "doctest.h"

using namespace aeflow;

namespace {

struct Pair {
  FlowEnsemble a, b;
};

Pair constant_pair(double N, std::uint64_t seed = 1) {
  const std::vector<double> s{0.3, 0.0, 0.0, 0.3};
  const auto fa = constant_field({1.0, 0.0}, s, 2), fb = constant_field({0.0, 0.0}, s, 2);
  const auto grid = restrict_to_shell(lattice_points(Lattice::cube(2, N, 40)), 0.0, N);
  auto noise = std::make_shared<const NoiseBundle>(generate(seed, 2, TimeGrid::from_horizon(1.0, 1e-2), 1));
  FlowOptions o;
  o.save_every = 1;
  return {integrate_forward(*fa, noise, grid, o), integrate_forward(*fb, noise, grid, o)};
}

}  // namespace

TEST_SUITE("stability") {
  TEST_CASE("constant drift pair closed form") {
    const auto p = constant_pair(2.0);
    const double delta = 0.1;
    const auto rep = log_functional(p.a, p.b, 2.0, 10.0, delta);
    REQUIRE(rep.set_size == p.a.size());
    for (double phi : rep.phi) CHECK(phi == doctest::Approx(1.0).epsilon(1e-12));
    const double mass = rep.cell_mass * static_cast<double>(rep.set_size);
    CHECK(rep.phi_integral == doctest::Approx(mass).epsilon(1e-12));
    CHECK(rep.xi == doctest::Approx(mass * std::log1p(1.0 / (delta * delta))).epsilon(1e-12));
  }

  TEST_CASE("xi is monotone in delta and symmetric") {
    const auto f = smooth_field(2);
    const auto g = mollify(smooth_field(2), Mollifier(2, 1));
    const auto grid = restrict_to_shell(lattice_points(Lattice::cube(2, 2.0, 20)), 0.0, 2.0);
    auto noise = std::make_shared<const NoiseBundle>(generate(3, 2, TimeGrid::from_horizon(0.5, 1e-2), 1));
    FlowOptions o;
    o.save_every = 5;
    const auto a = integrate_forward(*f, noise, grid, o), b = integrate_forward(*g, noise, grid, o);
    const auto ab = log_functional(a, b, 2.0, 10.0, 0.1), ba = log_functional(b, a, 2.0, 10.0, 0.1);
    CHECK(ab.xi == ba.xi);
    CHECK(ab.phi == ba.phi);
    double prev = std::numeric_limits<double>::infinity();
    for (double d : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
      const double x = xi_for_delta(ab, d);
      CHECK(x <= prev);
      prev = x;
    }
  }

  TEST_CASE("xi is additive over disjoint subsets") {
    const auto p = constant_pair(2.0);
    auto rep = log_functional(p.a, p.b, 2.0, 10.0, 0.1);
    auto left = rep, right = rep;
    for (std::size_t i = 0; i < rep.in_set.size(); ++i) {
      const bool west = p.a.initial.point(i)[0] < 0.0;
      left.in_set[i] = rep.in_set[i] && west;
      right.in_set[i] = rep.in_set[i] && !west;
    }
    CHECK(xi_for_delta(left, 0.1) + xi_for_delta(right, 0.1) == doctest::Approx(rep.xi).epsilon(1e-12));
  }

  TEST_CASE("chebyshev conversion") {
    const auto p = constant_pair(2.0);
    const auto rep = log_functional(p.a, p.b, 2.0, 10.0, 0.1);
    const auto c = chebyshev_bound(rep, 2.0);
    CHECK(c.first_term == doctest::Approx(200.0));
    CHECK(c.second_term == doctest::Approx(0.01 * std::expm1(4.0) * 4.0 * std::numbers::pi));
    CHECK(c.holds);
    const auto big = chebyshev_bound(rep, rep.xi);
    CHECK(std::isinf(big.bound));
    CHECK(big.holds);
    CHECK(big.hypothesis_holds);
    CHECK_THROWS_AS(chebyshev_bound(rep, 0.0), ValidationError);
  }

  TEST_CASE("flows on different paths are rejected") {
    const auto p = constant_pair(2.0, 1), q = constant_pair(2.0, 2);
    CHECK_THROWS_AS(log_functional(p.a, q.b, 2.0, 10.0, 0.1), ValidationError);
  }

  TEST_CASE("uniqueness report") {
    const auto p = constant_pair(2.0);
    const auto rep = uniqueness_test(p.a, p.b, 2.0, 10.0, {0.5, 0.1, 0.01});
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.m == rep.rows.back().xi);
    CHECK(rep.xi_slope > 0.0);
    CHECK_THROWS_AS(uniqueness_test(p.a, p.b, 2.0, 10.0, {0.1, 0.5}), ValidationError);
  }

  TEST_CASE("cauchy table on a smooth family shrinks") {
    const auto base = smooth_field(2);
    const auto grid = restrict_to_shell(lattice_points(Lattice::cube(2, 1.0, 10)), 0.0, 1.0);
    CauchyOptions o;
    o.horizon = 0.1;
    o.dt = 1e-2;
    o.n_radius = 1.0;
    // The cutoff chi_n is identically 1 on B_n, so levels >= R compare the kernel part only.
    o.radius = 2.0;
    o.distance_spacing = 0.25;
    const auto t = cauchy_diagnostic([&](int n) { return mollify(base, Mollifier(2, n)); }, {2, 4, 8}, {1, 2}, grid, o);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0].n == 2);
    CHECK(t.rows[0].m == 4);
    CHECK(t.rows[1].delta_nm < t.rows[0].delta_nm);
    CHECK(t.rows[1].expected_integral < t.rows[0].expected_integral);
    CHECK(t.table().size() == 2);
  }
}
