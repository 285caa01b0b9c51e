#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lyap/expr.hpp"

using namespace lyap;

namespace {

double uniform(std::mt19937_64& eng, double lo, double hi) {
  const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

// Central finite difference for cross-checking symbolic derivatives.
double fd(const ExprPtr& e, std::vector<double> x, int i, double h = 1e-6) {
  x[i] += h;
  const double up = eval_point(e, x);
  x[i] -= 2.0 * h;
  const double dn = eval_point(e, x);
  return (up - dn) / (2.0 * h);
}

}  // namespace

TEST_SUITE("expr") {

TEST_CASE("interval evaluation encloses sampled point values") {
  // x0^2 - x0 on [0, 1]: true range [-1/4, 0], naive interval [-1, 1].
  const ExprPtr e = sqr(var(0)) - var(0);
  Box b;
  b.dims = {Interval(0.0, 1.0)};
  const Interval enc = eval_interval(e, b);
  CHECK(enc.lo <= -0.25);
  CHECK(enc.hi >= 0.0);
  CHECK(enc.lo >= -1.0 - 1e-12);
  CHECK(enc.hi <= 1.0 + 1e-12);
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    CHECK(enc.contains(x * x - x));
  }
}

TEST_CASE("smart constructors fold constants and drop no-ops") {
  CHECK(add(cst(1.0), cst(2.0))->op == Op::kConst);
  CHECK(add(cst(1.0), cst(2.0))->cval == 3.0);
  const ExprPtr x = var(0);
  CHECK(add(x, cst(0.0)).get() == x.get());
  CHECK(mul(x, cst(1.0)).get() == x.get());
  CHECK(mul(x, cst(0.0))->op == Op::kConst);
  CHECK(neg(neg(x)).get() == x.get());
  CHECK(sub(x, cst(0.0)).get() == x.get());
  CHECK(div(x, cst(1.0)).get() == x.get());
  CHECK(tanh(cst(0.5))->op == Op::kConst);
}

TEST_CASE("invalid constructions throw") {
  CHECK_THROWS_AS((void)div(var(0), cst(0.0)), std::invalid_argument);
  CHECK_THROWS_AS((void)var(-1), std::invalid_argument);
  CHECK_THROWS_AS((void)dot({var(0)}, {var(0), var(1)}), std::invalid_argument);
  CHECK_THROWS_AS((void)diff(abs(var(0)), 0), std::domain_error);
}

TEST_CASE("symbolic derivatives match finite differences") {
  const ExprPtr x0 = var(0), x1 = var(1);
  const std::vector<ExprPtr> exprs = {
      tanh(x0 * x1) + sin(x0) * cos(x1),
      sqr(x0) * x1 - x0 / (sqr(x1) + cst(2.0)),
      sqrt(sqr(x0) + sqr(x1) + cst(0.1)),
      tanh(tanh(x0) + cst(0.3) * x1) - neg(x0),
      sin(cst(2.0) * x0 + x1) * tanh(x1),
  };
  std::mt19937_64 eng(7);
  for (const auto& e : exprs) {
    for (int i = 0; i < 2; ++i) {
      const ExprPtr de = diff(e, i);
      for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> x = {uniform(eng, -2.0, 2.0),
                                       uniform(eng, -2.0, 2.0)};
        const double sym = eval_point(de, x);
        const double num = fd(e, x, i);
        CHECK(sym == doctest::Approx(num).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("tanh derivative reuses the original node") {
  const ExprPtr t = tanh(var(0));
  const ExprPtr dt = diff(t, 0);  // 1 - tanh(x)^2, sharing the tanh node
  CHECK(eval_point(dt, {0.0}) == doctest::Approx(1.0));
  const double th = std::tanh(0.7);
  CHECK(eval_point(dt, {0.7}) == doctest::Approx(1.0 - th * th));
  // Compiling value and derivative together must share the tanh sub-tree:
  // the joint tape is smaller than the sum of the separate ones.
  const Tape joint = compile({t, dt});
  const Tape tv = compile({t});
  const Tape td = compile({dt});
  CHECK(joint.code.size() < tv.code.size() + td.code.size());
}

TEST_CASE("tape evaluation agrees with direct evaluation") {
  const ExprPtr x0 = var(0), x1 = var(1);
  const ExprPtr v = tanh(sqr(x0) + cst(0.5) * x1);
  const ExprPtr d0 = diff(v, 0);
  const ExprPtr d1 = diff(v, 1);
  const Tape tape = compile({v, d0, d1});
  CHECK(tape.n_vars == 2);

  std::mt19937_64 eng(11);
  std::vector<double> slots;
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> x = {uniform(eng, -3.0, 3.0),
                                   uniform(eng, -3.0, 3.0)};
    tape.eval_point(slots, x);
    CHECK(slots[tape.roots[0]] == eval_point(v, x));
    CHECK(slots[tape.roots[1]] == eval_point(d0, x));
    CHECK(slots[tape.roots[2]] == eval_point(d1, x));
  }

  Box b;
  b.dims = {Interval(-0.5, 0.25), Interval(0.1, 0.9)};
  std::vector<Interval> islots;
  tape.eval_interval(islots, b);
  const Interval direct = eval_interval(v, b);
  CHECK(islots[tape.roots[0]].lo == direct.lo);
  CHECK(islots[tape.roots[0]].hi == direct.hi);
}

TEST_CASE("duplicate roots compile to one slot") {
  const ExprPtr e = sqr(var(0)) + var(1);
  const Tape t = compile({e, e});
  CHECK(t.roots.size() == 2);
  CHECK(t.roots[0] == t.roots[1]);
  CHECK(t.code.size() == compile({e}).code.size());
}

TEST_CASE("max_var_index walks the whole DAG") {
  CHECK(max_var_index(cst(3.0)) == -1);
  CHECK(max_var_index(var(4)) == 4);
  CHECK(max_var_index(tanh(var(1) + sin(var(3)))) == 3);
}

TEST_CASE("dot builds the expected inner product") {
  const ExprPtr e = dot({var(0), var(1)}, {cst(2.0), cst(-1.0)});
  CHECK(eval_point(e, {3.0, 5.0}) == doctest::Approx(1.0));
}

}  // TEST_SUITE
