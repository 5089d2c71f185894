#include <cmath>

#include "aeflow/invariant.hpp"
#include "aeflow/presets.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace aeflow;

namespace {

KrylovOptions small_options(std::vector<double> horizons, double burn_in = 0.0) {
  KrylovOptions o;
  o.dt = 1e-2;
  o.horizons = std::move(horizons);
  o.burn_in = burn_in;
  o.per_axis = 200;
  return o;
}

const Box kGamma0{{-1.0}, {1.0}};
const HistogramSpec kHist{{{-5.0}, {5.0}}, 0.25};

}  // namespace

TEST_SUITE("invariant") {
  TEST_CASE("cesaro merge reproduces the doubled horizon exactly") {
    const auto f = ou_field(1);
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto full = krylov_bogoliubov(*f, seeds, kGamma0, kHist, small_options({1.0, 2.0}));
    const auto second = krylov_bogoliubov(*f, seeds, kGamma0, kHist, small_options({2.0}, 1.0));
    const auto merged = merge(full[0], second[0]);
    CHECK(merged.counts == full[1].counts);
    CHECK(merged.samples == full[1].samples);
    CHECK(merged.seed_counts == full[1].seed_counts);
    CHECK(merged.escaped_samples == full[1].escaped_samples);
    CHECK_THROWS_AS(merge(full[0], full[1]), ValidationError);
  }

  TEST_CASE("frozen dynamics keep the initial law") {
    const auto f = constant_field({0.0}, {0.0}, 1);
    const auto mu = krylov_bogoliubov(*f, {1, 2}, kGamma0, kHist, small_options({0.5, 1.0}));
    for (const auto& m : mu) {
      for (std::size_t b = 0; b < m.bin_count(); ++b) {
        const double c = m.bin_center(b)[0];
        CHECK(m.density(b) == doctest::Approx(std::abs(c) < 1.0 ? 0.5 : 0.0));
      }
      CHECK(m.escaped_mass() == 0.0);
      CHECK(m.k_hat == doctest::Approx(1.0));
      CHECK(m.density_bound_holds);
    }
    FunctionBank bank{TestFunction::bump({0.0}, 2.0), TestFunction::poly_bump({2}, {0.0}, 3.0)};
    const auto rep = check_invariance(*f, mu.back(), bank, 1.0, 1e-2, {5, 6}, 200);
    for (const auto& r : rep.rows) CHECK(r.discrepancy == 0.0);
    CHECK(rep.holds);
  }

  TEST_CASE("constant test function has zero discrepancy") {
    const auto f = ou_field(1);
    const auto mu = krylov_bogoliubov(*f, {1, 2}, kGamma0, kHist, small_options({2.0}));
    const auto rep = check_invariance(*f, mu.back(), {TestFunction::constant_one(1)}, 0.5, 1e-2, {3, 4}, 100);
    CHECK(rep.rows[0].discrepancy == 0.0);
    CHECK(rep.holds);
  }

  TEST_CASE("ou occupation measure approaches the standard normal") {
    const auto f = ou_field(1);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 16; ++s) seeds.push_back(s);
    auto o = small_options({2.0, 8.0, 32.0});
    o.per_axis = 250;
    const auto mu = krylov_bogoliubov(*f, seeds, kGamma0, kHist, o);
    const auto normal = [](std::span<const double> x) { return std::exp(-0.5 * x[0] * x[0]) / std::sqrt(2.0 * std::numbers::pi); };
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& m : mu) {
      const double dist = sup_density_distance(m, normal);
      CHECK(dist < prev);
      prev = dist;
      CHECK(m.density_bound_holds);
      CHECK(m.total_mass() + m.escaped_mass() <= 1.0 + 1e-12);
    }
    CHECK(prev < 0.08);
    CHECK(mu.back().moment2() == doctest::Approx(1.0).epsilon(0.1));
    const auto co = check_coercivity(*f, lattice_points(Lattice::cube(1, 5.0, 41)));
    CHECK(mu.back().moment2() <= coercivity_moment_envelope(co.c1, co.c2, 1.0 / 3.0, 32.0));
  }

  TEST_CASE("tightness proxy on the rotation preset") {
    const auto f = rotation_field();
    const Box g0{{-1.0, -1.0}, {1.0, 1.0}};
    const HistogramSpec hist{{{-4.0, -4.0}, {4.0, 4.0}}, 0.5};
    auto o = small_options({4.0, 16.0});
    o.per_axis = 20;
    const auto mu = krylov_bogoliubov(*f, {1, 2}, g0, hist, o);
    const auto co = check_coercivity(*f, lattice_points(Lattice::cube(2, 4.0, 17)));
    REQUIRE(co.holds);
    for (const auto& m : mu) CHECK(m.moment2() <= coercivity_moment_envelope(co.c1, co.c2, 2.0 / 3.0, m.horizon));
    // Mass outside B_r decreases in r.
    const auto& m = mu.back();
    double prev = 1.0;
    for (double r : {0.5, 1.0, 2.0, 3.0}) {
      double outside = 0.0;
      for (std::size_t b = 0; b < m.bin_count(); ++b)
        if (norm2(m.bin_center(b)) > r * r) outside += m.mass(b);
      CHECK(outside <= prev);
      prev = outside;
    }
  }

  TEST_CASE("certified constant") {
    const auto grid = sample_shell(3, 0.01, 3.0, 500, 2);
    CHECK(certified_compression(*example_field(3, 51.0, 10), grid, 2.0) == 1.0);
    CHECK_THROWS_AS(certified_compression(*ou_field(1), lattice_points(Lattice::cube(1, 3.0, 31)), 1.0), ValidationError);
    auto o = small_options({1.0});
    o.density_constant = DensityConstant::certified;
    CHECK_THROWS_AS(krylov_bogoliubov(*ou_field(1), {1}, kGamma0, kHist, o), ValidationError);
  }

  TEST_CASE("escaping mass is refused") {
    const auto f = constant_field({20.0}, {0.0}, 1);
    CHECK_THROWS_AS(krylov_bogoliubov(*f, {1}, kGamma0, kHist, small_options({1.0})), CheckFailed);
  }

  TEST_CASE("json fields") {
    const auto mu = krylov_bogoliubov(*ou_field(1), {1}, kGamma0, kHist, small_options({1.0}));
    const auto j = nlohmann::json::parse(mu[0].to_json());
    for (const char* k : {"horizon", "bins", "gamma_hat_sup", "escaped_mass", "moment2"}) CHECK(j.contains(k));
    CHECK(coercivity_moment_envelope(1.0, 2.0, 3.0, 4.0) == doctest::Approx(2.75));
  }
}
