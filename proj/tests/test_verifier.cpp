#include <doctest.h>

#include <cmath>
#include <vector>

#include "lyap/verifier.hpp"

using namespace lyap;

namespace {

// V = x1^2 + x2^2 with its Lie derivative along xdot = -x: -2x1^2 - 2x2^2.
VerifyProblem stable_quadratic(double eps) {
  VerifyProblem p;
  p.region.domain = Box::cube(2, 1.0);
  p.region.inner_radius = eps;
  p.V = sqr(var(0)) + sqr(var(1));
  p.lie = cst(-2.0) * sqr(var(0)) + cst(-2.0) * sqr(var(1));
  p.beta = 0.0;
  return p;
}

// Exhaustive grid check that no point violates the conditions proven UNSAT.
bool grid_finds_violation(const VerifyProblem& p, int res) {
  const Box& d = p.region.domain;
  const double e2 = p.region.inner_radius * p.region.inner_radius;
  const double r2 = p.region.outer_radius * p.region.outer_radius;
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      const double x = d.dims[0].lo + d.dims[0].width() * i / (res - 1);
      const double y = d.dims[1].lo + d.dims[1].width() * j / (res - 1);
      const double nsq = x * x + y * y;
      if (nsq < e2) continue;
      if (p.region.outer_radius > 0.0 && nsq > r2) continue;
      const std::vector<double> pt = {x, y};
      if (eval_point(p.V, pt) <= 0.0) return true;
      if (eval_point(p.lie, pt) >= -p.beta) return true;
    }
  }
  return false;
}

}  // namespace

TEST_SUITE("verifier") {

TEST_CASE("analytic Lyapunov pair is proven UNSAT") {
  const VerifyProblem p = stable_quadratic(0.01);
  const Verdict v = falsify(p);
  REQUIRE(v.kind == VerdictKind::kUnsat);
  CHECK(v.leaves_proven > 0);
  CHECK(v.boxes_processed >= v.leaves_proven);
  CHECK_FALSE(grid_finds_violation(p, 200));
}

TEST_CASE("sign-indefinite candidate yields a confirmed witness") {
  VerifyProblem p = stable_quadratic(0.01);
  p.V = sqr(var(0)) - sqr(var(1));  // negative along the x2 axis
  const Verdict v = falsify(p);
  REQUIRE(v.kind == VerdictKind::kDeltaSat);
  CHECK(v.violated_clause == 0);
  CHECK(v.witness.width() <= 0.01);
  // The center must violate the V <= 0 disjunct within precision slack
  // while staying (within slack) outside the excluded ball.
  const std::vector<double> c = v.witness.center();
  CHECK(eval_point(p.V, c) <= 0.01);
  CHECK(c[0] * c[0] + c[1] * c[1] >= 0.01 * 0.01 - 0.01);
}

TEST_CASE("positive-Lie-derivative candidate reports the second clause") {
  VerifyProblem p = stable_quadratic(0.1);
  p.lie = sqr(var(0)) + sqr(var(1));  // >= eps^2 > 0 on the whole region
  const Verdict v = falsify(p);
  REQUIRE(v.kind == VerdictKind::kDeltaSat);
  CHECK(v.violated_clause == 1);
  const std::vector<double> c = v.witness.center();
  CHECK(eval_point(p.lie, c) >= -p.beta - 0.01);
}

TEST_CASE("violations strictly inside the excluded ball do not count") {
  // V dips below zero only for ||x|| <= 0.01, well inside eps = 0.2.
  VerifyProblem p = stable_quadratic(0.2);
  p.V = sqr(var(0)) + sqr(var(1)) - cst(1e-4);
  const Verdict v = falsify(p);
  CHECK(v.kind == VerdictKind::kUnsat);
  // Shrinking eps below the dip exposes the violation.
  p.region.inner_radius = 0.001;
  const Verdict v2 = falsify(p);
  REQUIRE(v2.kind == VerdictKind::kDeltaSat);
  CHECK(v2.violated_clause == 0);
}

TEST_CASE("outer ball restricts the search region") {
  VerifyProblem p;
  p.region.domain = Box::cube(2, 1.2);
  p.region.inner_radius = 0.1;
  p.region.outer_radius = 1.1;
  // 1.3 - ||x||^2 >= 0.09 on the ball of radius 1.1, but dips <= 0 in the
  // domain box corners, which lie outside the ball and must be ignored.
  p.V = cst(1.3) - sqr(var(0)) - sqr(var(1));
  p.lie = cst(-1.0);
  const Verdict v = falsify(p);
  CHECK(v.kind == VerdictKind::kUnsat);
  CHECK_FALSE(grid_finds_violation(p, 200));
  // Without the outer ball the corner violation is real.
  p.region.outer_radius = 0.0;
  const Verdict v2 = falsify(p);
  REQUIRE(v2.kind == VerdictKind::kDeltaSat);
  const std::vector<double> c = v2.witness.center();
  CHECK(c[0] * c[0] + c[1] * c[1] >= 1.3 - 0.011);
}

TEST_CASE("boundary-shell query certifies a level set") {
  // On the shell 0.99 <= ||x|| <= 1, V - 0.5 stays positive, so the level
  // set {V <= 0.5} cannot touch the unit-disk boundary. The lie clause is
  // disabled with a constant -1.
  VerifyProblem p;
  p.region.domain = Box::cube(2, 1.0);
  p.region.inner_radius = 0.99;
  p.region.outer_radius = 1.0;
  p.V = sqr(var(0)) + sqr(var(1)) - cst(0.5);
  p.lie = cst(-1.0);
  CHECK(falsify(p).kind == VerdictKind::kUnsat);
  // A level above the shell minimum 0.9801 is reachable: falsifiable.
  p.V = sqr(var(0)) + sqr(var(1)) - cst(0.99);
  CHECK(falsify(p).kind == VerdictKind::kDeltaSat);
}

TEST_CASE("budget exhaustion yields Unknown with worklist accounting") {
  const VerifyProblem p = stable_quadratic(0.01);
  FalsifyOptions opt;
  opt.max_boxes = 3;
  const Verdict v = falsify(p, opt);
  CHECK(v.kind == VerdictKind::kUnknown);
  CHECK(v.worklist_remaining >= 1);
}

TEST_CASE("verdicts are identical across worker counts") {
  for (const bool sat_case : {false, true}) {
    VerifyProblem p = stable_quadratic(0.01);
    if (sat_case) p.V = sqr(var(0)) - sqr(var(1));
    Verdict base;
    for (const int workers : {1, 4, 8}) {
      FalsifyOptions opt;
      opt.workers = workers;
      const Verdict v = falsify(p, opt);
      if (workers == 1) {
        base = v;
        continue;
      }
      CHECK(v.kind == base.kind);
      CHECK(v.leaves_proven == base.leaves_proven);
      CHECK(v.boxes_processed == base.boxes_processed);
      if (v.kind == VerdictKind::kDeltaSat) {
        REQUIRE(v.witness.size() == base.witness.size());
        for (int i = 0; i < v.witness.size(); ++i) {
          CHECK(v.witness.dims[i].lo == base.witness.dims[i].lo);
          CHECK(v.witness.dims[i].hi == base.witness.dims[i].hi);
        }
      }
    }
  }
}

TEST_CASE("bound_sup brackets the supremum of sin on [0, pi]") {
  Region r;
  r.domain = Box(std::vector<Interval>{Interval(0.0, 3.14159265358979324)});
  const SupBound s = bound_sup(sin(var(0)), r, 1e-3);
  CHECK(s.tight);
  CHECK(s.bound.hi >= 1.0);
  CHECK(s.bound.hi <= 1.0 + 1e-3);
  CHECK(s.bound.lo <= 1.0);
  CHECK(s.bound.lo >= 1.0 - 1e-3);
}

TEST_CASE("bound_sup of a constant is exact") {
  Region r;
  r.domain = Box::cube(2, 1.0);
  const SupBound s = bound_sup(cst(0.25), r, 1e-6);
  CHECK(s.tight);
  CHECK(s.bound.lo == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s.bound.hi == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("bound_inf mirrors bound_sup") {
  Region r;
  r.domain = Box::cube(2, 1.0);
  r.inner_radius = 0.5;
  // inf of ||x||^2 over the annulus-in-box region is 0.25, on the ring.
  const SupBound s = bound_inf(sqr(var(0)) + sqr(var(1)), r, 1e-3);
  CHECK(s.bound.lo <= 0.25);
  CHECK(s.bound.lo >= 0.25 - 1e-2);
  CHECK(s.bound.hi >= 0.25);
}

TEST_CASE("invalid inputs are rejected") {
  VerifyProblem p = stable_quadratic(0.01);
  FalsifyOptions opt;
  opt.precision = 0.0;
  CHECK_THROWS_AS((void)falsify(p, opt), std::invalid_argument);
  p.V = sqr(var(2));  // variable beyond the 2-D region
  CHECK_THROWS_AS((void)falsify(p), std::invalid_argument);
}

}  // TEST_SUITE
