#include <cmath>

#include "aeflow/maximal.hpp"
#include "doctest.h"

using namespace aeflow;

namespace {

// Brute-force ball average over every lattice node within distance r of node c. The ball is
// closed, with the same relative slack as the operator so that nodes exactly at r are kept.
double ball_average(const GridFunction& f, std::size_t c, double r) {
  const auto& lat = f.lattice;
  const auto xc = lat.node(c);
  double s = 0.0, n = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto y = lat.node(i);
    double d2 = 0.0;
    for (int a = 0; a < lat.dim; ++a) d2 += (y[a] - xc[a]) * (y[a] - xc[a]);
    if (d2 <= r * r * (1.0 + 1e-12)) {
      s += std::abs(f.values[i]);
      n += 1.0;
    }
  }
  return s / n;
}

GridFunction wave(const Lattice& lat, double phase) {
  return GridFunction::sample(lat, [phase](std::span<const double> x) {
    double s = phase;
    for (double v : x) s += std::sin(3.0 * v + phase) * v;
    return s;
  });
}

}  // namespace

TEST_SUITE("maximal") {
  TEST_CASE("radius ladder") {
    const auto r = radius_ladder(0.125, 2.0, 4);
    REQUIRE(r.size() == 16);
    CHECK(r.front() == doctest::Approx(0.125 * std::pow(2.0, 0.25)));
    CHECK(r.back() == 2.0);
    for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i] > r[i - 1]);
  }

  TEST_CASE("worked value in one dimension") {
    const double h = 0x1.0p-7;
    const auto lat = Lattice::box({-4.0 - h / 2}, {6.0 - h / 2}, 1280);
    const auto f = GridFunction::sample(lat, [](std::span<const double> x) { return x[0] >= 0.0 && x[0] <= 1.0; });
    const auto m = maximal_function(f, 3.0);
    const std::size_t at = 768;
    REQUIRE(lat.node(at)[0] == 2.0);
    CHECK(m.value.values[at] == doctest::Approx(0.25).epsilon(0.01));
    double brute = 0.0;
    for (int k = 1; k * h <= 3.0; ++k) brute = std::max(brute, ball_average(f, at, k * h));
    CHECK(m.value.values[at] == doctest::Approx(brute).epsilon(0.01));
  }

  TEST_CASE("operator agrees with brute force on the ladder") {
    const auto lat = Lattice::box({-1.0, -1.0}, {1.0, 1.0}, 24);
    const auto f = wave(lat, 0.3);
    const double R = 0.5;
    const auto m = maximal_function(f, R);
    for (std::size_t c : {std::size_t{0}, std::size_t{100}, std::size_t{299}, std::size_t{575}}) {
      double best = std::abs(f.values[c]);
      for (double r : m.radii) best = std::max(best, ball_average(f, c, r));
      CHECK(m.value.values[c] == doctest::Approx(best).epsilon(1e-13));
    }
  }

  TEST_CASE("identities on interior nodes") {
    const auto lat = Lattice::box({-2.0, -2.0}, {2.0, 2.0}, 32);
    const double R = 0.75;
    const auto c = GridFunction::sample(lat, [](std::span<const double>) { return 2.5; });
    const auto f = wave(lat, 0.1), g = wave(lat, 1.7);
    auto fg = f, f2 = f, f3 = f;
    for (std::size_t i = 0; i < f.size(); ++i) {
      fg.values[i] = f.values[i] + g.values[i];
      f2.values[i] = 2.0 * f.values[i];
      f3.values[i] = 0.3 * f.values[i];
    }
    const auto mc = maximal_function(c, R), mf = maximal_function(f, R), mg = maximal_function(g, R),
               mfg = maximal_function(fg, R), mf2 = maximal_function(f2, R), mf3 = maximal_function(f3, R),
               small = maximal_function(f, 0.5);
    std::size_t interior = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (mf.boundary_incomplete[i]) continue;
      ++interior;
      CHECK(mc.value.values[i] == 2.5);
      CHECK(mf2.value.values[i] == 2.0 * mf.value.values[i]);
      CHECK(mf3.value.values[i] == doctest::Approx(0.3 * mf.value.values[i]).epsilon(1e-14));
      const double sum = mf.value.values[i] + mg.value.values[i];
      CHECK(mfg.value.values[i] <= sum + 8.0 * std::numeric_limits<double>::epsilon() * sum);
      CHECK(small.value.values[i] <= mf.value.values[i]);
    }
    CHECK(interior > 100);
  }

  TEST_CASE("gradient of an affine function") {
    const auto lat = Lattice::box({-1.0, -1.0}, {1.0, 1.0}, 16);
    const auto f = GridFunction::sample(lat, [](std::span<const double> x) { return 3.0 * x[0] - 4.0 * x[1]; });
    const auto g = gradient_norm(f);
    for (double v : g.values) CHECK(v == doctest::Approx(5.0).epsilon(1e-12));
  }

  TEST_CASE("lp ratio is scale invariant") {
    const auto lat = Lattice::box({-3.0, -3.0}, {3.0, 3.0}, 48);
    const auto f = wave(lat, 0.5);
    const auto rep = check_lp_bound(f, 2.0, 1.0, 1.0);
    CHECK(rep.ratios.size() == 4);
    CHECK(rep.max_relative_spread < 1e-12);
    CHECK(rep.bounded);
  }

  TEST_CASE("morrey constants are finite for smooth data") {
    const auto lat = Lattice::box({-2.0, -2.0}, {2.0, 2.0}, 40);
    const auto f = wave(lat, 0.2);
    const auto pairs = sample_pairs(lat, 0.5, 200, 3);
    const auto rep = check_morrey_pointwise(f, gradient_norm(f), 1.5, 0.5, pairs);
    CHECK(rep.finite);
    CHECK(rep.pairs_used > 0);
    CHECK(rep.c_two_point < 10.0);
  }

  TEST_CASE("llogl family is consistent") {
    const auto lat = Lattice::box({-2.0, -2.0}, {2.0, 2.0}, 32);
    const auto rep = check_llogl_bound(wave(lat, 0.4), 1.0, 0.5);
    CHECK(rep.rows.size() == 4);
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
      CHECK(rep.rows[i].maximal_integral > rep.rows[i - 1].maximal_integral);
  }

  TEST_CASE("csv round trip") {
    const auto lat = Lattice::box({0.0}, {1.0}, 8);
    const auto f = wave(lat, 0.0);
    CHECK(f.table().size() == 8);
  }

  TEST_CASE("too few radii are rejected") {
    const auto lat = Lattice::box({0.0}, {1.0}, 8);
    CHECK_THROWS_AS(maximal_function(wave(lat, 0.0), 0.2), ValidationError);
  }
}
