#include <doctest.h>

#include <cmath>
#include <random>

#include "lyap/interval.hpp"

using lyap::Box;
using lyap::Interval;

namespace {

// Deterministic uniform double in [lo, hi). std::uniform_real_distribution is
// implementation-defined, so we map raw engine bits by hand.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(std::uint64_t seed) : eng(seed) {}
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
};

Interval random_interval(Rng& rng, double lo, double hi) {
  double a = rng.uniform(lo, hi), b = rng.uniform(lo, hi);
  if (a > b) std::swap(a, b);
  return {a, b};
}

}  // namespace

TEST_SUITE("interval") {

TEST_CASE("arithmetic encloses every point result") {
  Rng rng(20240901);
  for (int trial = 0; trial < 2000; ++trial) {
    const Interval a = random_interval(rng, -5.0, 5.0);
    const Interval b = random_interval(rng, -5.0, 5.0);
    const double x = rng.uniform(a.lo, a.hi);
    const double y = rng.uniform(b.lo, b.hi);
    CHECK((a + b).contains(x + y));
    CHECK((a - b).contains(x - y));
    CHECK((a * b).contains(x * y));
    if (!b.contains(0.0)) CHECK((a / b).contains(x / y));
    CHECK(lyap::sqr(a).contains(x * x));
    CHECK(lyap::abs(a).contains(std::abs(x)));
    CHECK(lyap::tanh(a).contains(std::tanh(x)));
    CHECK(lyap::sin(a).contains(std::sin(x)));
    CHECK(lyap::cos(a).contains(std::cos(x)));
    if (a.lo >= 0.0) CHECK(lyap::sqrt(a).contains(std::sqrt(x)));
  }
}

TEST_CASE("outward rounding keeps exact real results strictly inside") {
  // 1/3 and 1/10 are not representable; the quotient interval must still
  // bracket them.
  const Interval third = Interval::point(1.0) / Interval::point(3.0);
  CHECK(third.lo < third.hi);
  CHECK(third.contains(1.0 / 3.0));
  const Interval tenth = Interval::point(1.0) / Interval::point(10.0);
  CHECK(tenth.lo < 0.1);
  CHECK(tenth.hi > 0.1);
}

TEST_CASE("division by a zero-containing interval returns the finite sentinel") {
  const Interval q = Interval(1.0, 2.0) / Interval(-0.5, 0.5);
  CHECK(q.is_finite());
  CHECK(q.lo == -1e300);
  CHECK(q.hi == 1e300);
  // Downstream arithmetic on the sentinel must stay NaN-free.
  const Interval r = q * Interval(0.0, 1.0) + Interval(-1.0, 1.0);
  CHECK(r.is_finite());
}

TEST_CASE("sqr of a straddling interval is pinned at zero") {
  const Interval s = lyap::sqr(Interval(-2.0, 3.0));
  CHECK(s.lo == 0.0);
  CHECK(s.hi >= 9.0);
  CHECK(s.hi < 9.0 + 1e-12);
}

TEST_CASE("sqrt clamps below zero instead of producing NaN") {
  const Interval s = lyap::sqrt(Interval(-1.0, 4.0));
  CHECK(s.lo == 0.0);
  CHECK(s.hi >= 2.0);
  CHECK(s.is_finite());
}

TEST_CASE("tanh is tight and stays within the closed unit interval") {
  const Interval t = lyap::tanh(Interval(0.0, 1.0));
  CHECK(t.lo <= 0.0);
  CHECK(t.lo > -1e-12);
  CHECK(t.hi >= 0.7615941559557649);
  CHECK(t.hi < 0.7615941559557649 + 1e-12);
  const Interval wide = lyap::tanh(Interval(-60.0, 60.0));
  CHECK(wide.lo == -1.0);
  CHECK(wide.hi == 1.0);
}

TEST_CASE("sin and cos detect interior extrema") {
  const double pi = 3.14159265358979323846;
  // pi/2 lies inside, so the max is exactly 1; no minimum is crossed.
  const Interval s = lyap::sin(Interval(0.0, pi));
  CHECK(s.hi == 1.0);
  CHECK(s.lo <= 0.0);
  CHECK(s.lo > -1e-12);
  // 3*pi/2 inside [4, 5]: minimum -1, and the maximum comes from an endpoint.
  const Interval s2 = lyap::sin(Interval(4.0, 5.0));
  CHECK(s2.lo == -1.0);
  CHECK(s2.hi < 0.0);
  // cos has its max at 0, inside [-1, 1].
  const Interval c = lyap::cos(Interval(-1.0, 1.0));
  CHECK(c.hi == 1.0);
  CHECK(c.lo <= std::cos(1.0));
  CHECK(c.lo > std::cos(1.0) - 1e-12);
  // A full period collapses to [-1, 1].
  const Interval full = lyap::sin(Interval(0.0, 7.0));
  CHECK(full.lo == -1.0);
  CHECK(full.hi == 1.0);
}

TEST_CASE("boxes expose size, max width and center") {
  Box b = Box::cube(2, 1.5);
  CHECK(b.size() == 2);
  CHECK(b.width() == doctest::Approx(3.0));
  CHECK(b.center()[0] == 0.0);
  CHECK(b.center()[1] == 0.0);
  b.dims[1] = Interval(0.0, 0.5);
  CHECK(b.width() == doctest::Approx(3.0));
  CHECK(b.center()[1] == doctest::Approx(0.25));
  CHECK(b.to_string().size() > 0);
}

TEST_CASE("hull covers both operands") {
  const Interval h = lyap::hull(Interval(-1.0, 0.5), Interval(0.25, 2.0));
  CHECK(h.lo == -1.0);
  CHECK(h.hi == 2.0);
}

}  // TEST_SUITE
