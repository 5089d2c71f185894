#include <sstream>

#include "aeflow/common.hpp"
#include "aeflow/noise.hpp"
#include "aeflow/rng.hpp"
#include "doctest.h"

using namespace aeflow;

TEST_SUITE("noise") {
  // Known-answer vectors distributed with Random123.
  TEST_CASE("philox4x32-10 known answers") {
    using P = Philox4x32;
    CHECK(P::generate({0, 0, 0, 0}, {0, 0}) == P::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(P::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          P::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(P::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          P::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
  }

  TEST_CASE("uniforms stay inside the open interval") {
    CHECK(uniform_open01(0, 0) > 0.0);
    CHECK(uniform_open01(0xffffffffu, 0xffffffffu) < 1.0);
  }

  TEST_CASE("generation is independent of the worker count") {
    const TimeGrid g(1e-3, 1000);
    const auto a = generate(42, 3, g, 1);
    const auto b = generate(42, 3, g, 4);
    CHECK(a == b);
    CHECK(a.increments() == b.increments());
    CHECK_FALSE(generate(43, 3, g, 1).increments() == a.increments());
  }

  TEST_CASE("increment moments") {
    const TimeGrid g(1e-2, 200000);
    const auto b = generate(7, 1, g, 1);
    double s = 0.0, s2 = 0.0;
    for (double v : b.increments()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(g.steps);
    CHECK(std::abs(s / n) < 4.0 * std::sqrt(g.dt / n));
    CHECK(s2 / n == doctest::Approx(g.dt).epsilon(0.02));
  }

  TEST_CASE("shift, reverse and truncate re-index the same increments") {
    const TimeGrid g(0.01, 100);
    const auto b = generate(3, 2, g, 1);
    const auto s = shift(b, 0.25);
    REQUIRE(s.steps() == 75);
    for (std::int64_t k = 0; k < s.steps(); ++k)
      for (int l = 0; l < 2; ++l) CHECK(s.increment(k)[l] == b.increment(k + 25)[l]);
    const auto r = reverse(b, 1.0);
    for (std::int64_t k = 0; k < r.steps(); ++k)
      for (int l = 0; l < 2; ++l) CHECK(r.increment(k)[l] == -b.increment(99 - k)[l]);
    // Reversal is an involution and W^T(T) = -W(T).
    CHECK(reverse(r, 1.0).increments() == b.increments());
    const auto wr = r.path_at(100), wb = b.path_at(100);
    CHECK(wr[0] == doctest::Approx(-wb[0]).epsilon(1e-12));
    const auto t = truncate(b, 40);
    CHECK(t.steps() == 40);
    CHECK(std::equal(t.increments().begin(), t.increments().end(), b.increments().begin()));
    CHECK(t.lineage() == "base|truncate(40)");
  }

  TEST_CASE("coarsening keeps the path") {
    const TimeGrid g(0.001, 400);
    const auto b = generate(11, 2, g, 1);
    const auto c = coarsen(b, 4);
    CHECK(c.steps() == 100);
    CHECK(c.dt() == doctest::Approx(0.004));
    CHECK(same_path(b, c));
    CHECK_FALSE(same_path(b, generate(12, 2, g, 1)));
    CHECK_THROWS_AS(coarsen(b, 3), ValidationError);
  }

  TEST_CASE("time grid validation") {
    CHECK(TimeGrid::from_horizon(0.25, 1e-3).steps == 250);
    CHECK_THROWS_AS(TimeGrid::from_horizon(0.25, 0.3), ValidationError);
    CHECK(TimeGrid(0.01, 100).index_of(0.37) == 37);
    CHECK_THROWS_AS(TimeGrid(0.01, 100).index_of(0.375), ValidationError);
  }

  TEST_CASE("csv and binary round trips are exact") {
    const auto b = generate(5, 2, TimeGrid(0.01, 50), 1);
    std::stringstream csv, bin;
    write_csv(b, csv);
    write_binary(b, bin);
    CHECK(read_csv(csv) == b);
    CHECK(read_binary(bin) == b);
  }

  TEST_CASE("derived seeds differ per stream") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    static_assert(derive_seed(0, 0) == derive_seed(0, 0));
  }
}
