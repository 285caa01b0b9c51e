#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "lyap/dynamics.hpp"

using namespace lyap;

namespace {

double uniform(std::mt19937_64& eng, double lo, double hi) {
  const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

const Eigen::VectorXd kNoInput = Eigen::VectorXd(0);

// Empirical Lipschitz ratio over random pairs in domain x input_box.
double max_ratio(const ControlSystem& sys, int pairs, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  auto draw = [&](Eigen::VectorXd& x, Eigen::VectorXd& u) {
    x.resize(sys.state_dim);
    u.resize(sys.input_dim);
    for (int i = 0; i < sys.state_dim; ++i)
      x(i) = uniform(eng, sys.domain.dims[i].lo, sys.domain.dims[i].hi);
    for (int i = 0; i < sys.input_dim; ++i)
      u(i) = uniform(eng, sys.input_box.dims[i].lo, sys.input_box.dims[i].hi);
  };
  double best = 0.0;
  Eigen::VectorXd xa, ua, xb, ub;
  for (int i = 0; i < pairs; ++i) {
    draw(xa, ua);
    draw(xb, ub);
    double dp = 0.0;
    dp += (xa - xb).squaredNorm() + (ua - ub).squaredNorm();
    dp = std::sqrt(dp);
    if (dp == 0.0) continue;
    const double df = (sys.rhs(xa, ua) - sys.rhs(xb, ub)).norm();
    best = std::max(best, df / dp);
  }
  return best;
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("benchmark right-hand sides match hand evaluations") {
  const ControlSystem vdp = vanderpol();
  CHECK(vdp.rhs(vec2(0, 0), kNoInput).norm() == 0.0);
  const Eigen::VectorXd f11 = vdp.rhs(vec2(1, 1), kNoInput);
  CHECK(f11(0) == -1.0);
  CHECK(f11(1) == 1.0);
  CHECK(vdp.jacobian_bound == 3.4599);

  const ControlSystem uni = unicycle();
  Eigen::VectorXd one(1);
  one << 1.0;
  CHECK(uni.rhs(vec2(0, 0), one).norm() == 0.0);
  const Eigen::VectorXd fq = uni.rhs(vec2(0, M_PI_2), Eigen::VectorXd::Zero(1));
  CHECK(fq(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(fq(1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(uni.jacobian_bound == 45.0);

  const ControlSystem pen = pendulum();
  CHECK(pen.rhs(vec2(0, 0), Eigen::VectorXd::Zero(1)).norm() == 0.0);
  const Eigen::VectorXd fp = pen.rhs(vec2(M_PI_2, 0), Eigen::VectorXd::Zero(1));
  CHECK(fp(0) == 0.0);
  CHECK(fp(1) == doctest::Approx(19.62).epsilon(1e-12));
  CHECK(pen.jacobian_bound == 33.214);
}

TEST_CASE("unicycle rejects states near its pole") {
  const ControlSystem uni = unicycle();
  CHECK_THROWS_AS((void)uni.rhs(vec2(1.0, 0), Eigen::VectorXd::Zero(1)),
                  std::domain_error);
  CHECK_THROWS_AS((void)uni.rhs(vec2(0.96, 0), Eigen::VectorXd::Zero(1)),
                  std::domain_error);
}

TEST_CASE("jacobian_bound dominates sampled difference ratios") {
  CHECK(max_ratio(vanderpol(), 20000, 1) <= vanderpol().jacobian_bound);
  CHECK(max_ratio(pendulum(), 20000, 2) <= pendulum().jacobian_bound);
  // The unicycle draw stays inside |d_e| <= 0.8, within the safe range.
  CHECK(max_ratio(unicycle(), 20000, 3) <= unicycle().jacobian_bound);
}

TEST_CASE("expression builders agree with rhs at sampled points") {
  std::mt19937_64 eng(7);
  for (const char* name : {"vanderpol", "unicycle", "pendulum"}) {
    const ControlSystem sys = system_by_name(name);
    std::vector<ExprPtr> xs, us;
    for (int i = 0; i < sys.state_dim; ++i) xs.push_back(var(i));
    for (int i = 0; i < sys.input_dim; ++i)
      us.push_back(var(sys.state_dim + i));
    const std::vector<ExprPtr> f = sys.rhs_expr(xs, us);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd x(sys.state_dim), u(sys.input_dim);
      std::vector<double> pt;
      for (int i = 0; i < sys.state_dim; ++i) {
        x(i) = uniform(eng, sys.domain.dims[i].lo, sys.domain.dims[i].hi);
        pt.push_back(x(i));
      }
      for (int i = 0; i < sys.input_dim; ++i) {
        u(i) = uniform(eng, sys.input_box.dims[i].lo, sys.input_box.dims[i].hi);
        pt.push_back(u(i));
      }
      const Eigen::VectorXd fx = sys.rhs(x, u);
      for (int i = 0; i < sys.state_dim; ++i)
        CHECK(eval_point(f[i], pt) == doctest::Approx(fx(i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("closing the loop keeps or measures the origin residual") {
  const ControlSystem pen = pendulum();
  SaturatingController zero;
  zero.C = Eigen::MatrixXd::Identity(1, 1) * 20.0;
  zero.k = Eigen::MatrixXd::Zero(1, 2);
  zero.b = Eigen::VectorXd::Zero(1);
  const ClosedLoopSystem loop = close_loop(pen, zero);
  CHECK(loop.eval(vec2(0, 0)).norm() == 0.0);
  CHECK(loop.origin_residual == 0.0);

  // The published unicycle controller holds the origin only approximately:
  // 5 tanh(0.19740) differs from the feedforward 1 the plant needs there.
  SaturatingController paper;
  paper.C = Eigen::MatrixXd::Identity(1, 1) * 5.0;
  paper.k.resize(1, 2);
  paper.k << -5.95539, -4.03426;
  paper.b.resize(1);
  paper.b << 0.19740;
  const ClosedLoopSystem uni_loop = close_loop(unicycle(), paper);
  CHECK(uni_loop.origin_residual ==
        doctest::Approx(0.025623344157336247).epsilon(1e-12));

  // Solving the bias instead drives the residual to machine precision.
  SaturatingController solved = paper;
  solved.b = solve_saturating_bias(paper.C, unicycle().equilibrium_shift);
  CHECK(close_loop(unicycle(), solved).origin_residual < 1e-12);

  SaturatingController bad = paper;
  bad.k.resize(1, 3);
  CHECK_THROWS_AS((void)close_loop(pen, bad), std::invalid_argument);
}

TEST_CASE("rk4 matches the exponential and shows fourth-order decay") {
  const Eigen::MatrixXd A = -Eigen::MatrixXd::Identity(1, 1);
  const ClosedLoopSystem sys =
      close_loop(linear_system(A, Eigen::MatrixXd::Zero(1, 1), 10.0),
                 SaturatingController{Eigen::MatrixXd::Zero(1, 1),
                                      Eigen::MatrixXd::Zero(1, 1),
                                      Eigen::VectorXd::Zero(1)});
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const Trajectory tr = simulate(sys, x0, 1.0, 1e-3);
  REQUIRE(tr.states.size() == 1001);
  CHECK(std::abs(tr.states.back()(0) - std::exp(-1.0)) < 1e-6);

  // Error vs the analytic solution shrinks ~16x when dt halves.
  auto err = [&](double dt) {
    const Trajectory t = simulate(sys, x0, 1.0, dt);
    return std::abs(t.states.back()(0) - std::exp(-1.0));
  };
  const double ratio = err(0.02) / err(0.01);
  CHECK(ratio > 12.0);
  CHECK(ratio < 20.0);
}

TEST_CASE("zero initial state stays at the origin") {
  const ClosedLoopSystem sys = autonomous(vanderpol());
  const Trajectory tr = simulate(sys, Eigen::VectorXd::Zero(2), 1.0, 1e-2);
  for (const auto& x : tr.states) CHECK(x.norm() == 0.0);
}

TEST_CASE("states inside the limit cycle spiral into the origin") {
  const Trajectory tr =
      simulate(autonomous(vanderpol()), vec2(0.5, 0.5), 20.0, 1e-3);
  CHECK_FALSE(tr.diverged);
  CHECK_FALSE(tr.nonfinite);
  CHECK(tr.states.back().norm() < 0.01);
}

TEST_CASE("divergence guard truncates escaping rollouts") {
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(1, 1);  // xdot = +x
  ControlSystem unstable = linear_system(A, Eigen::MatrixXd::Zero(1, 0), 1.0);
  const ClosedLoopSystem sys = autonomous(unstable);
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const Trajectory tr = simulate(sys, x0, 10.0, 1e-2);
  CHECK(tr.diverged);
  CHECK(tr.states.size() < 1001);
  CHECK(std::abs(tr.states.back()(0)) <= 10.0);
}

TEST_CASE("non-finite states truncate with the last valid time") {
  ControlSystem blowup;
  blowup.name = "blowup";
  blowup.state_dim = 1;
  blowup.input_dim = 0;
  blowup.domain = Box::cube(1, 1e12);  // guard far away; NaN hits first
  blowup.rhs = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    Eigen::VectorXd f(1);
    // Model goes numerically bad away from the origin, as a divergent
    // learned model might: the derivative itself stops being finite.
    f << (std::abs(x(0)) > 12.0 ? std::numeric_limits<double>::quiet_NaN()
                                : x(0));
    return f;
  };
  Eigen::VectorXd x0(1);
  x0 << 10.0;
  const Trajectory tr = simulate(autonomous(blowup), x0, 10.0, 0.1);
  CHECK(tr.nonfinite);
  CHECK(tr.times.size() == tr.states.size());
  CHECK(tr.states.back().allFinite());
}

TEST_CASE("stratified sampling yields the textbook gap") {
  // Two samples on the unit interval: centers 0.25 and 0.75, gap 0.25.
  ControlSystem line;
  line.name = "line";
  line.state_dim = 1;
  line.input_dim = 0;
  line.domain = Box(std::vector<Interval>{Interval(0.0, 1.0)});
  line.rhs = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
    return Eigen::VectorXd(-x);
  };
  const SampleSet two = sample_data(line, 2, 9);
  REQUIRE(two.XU.cols() == 2);
  CHECK(two.gap == doctest::Approx(0.25).epsilon(1e-15));
  const double a = std::min(two.XU(0, 0), two.XU(0, 1));
  const double b = std::max(two.XU(0, 0), two.XU(0, 1));
  CHECK(a == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(two.Y(0, 0) == -two.XU(0, 0));

  // 16 samples on a square: a 4x4 grid, gap = half the cell diagonal.
  const SampleSet grid = sample_data(vanderpol(), 16, 1);
  CHECK(grid.XU.cols() == 16);
  CHECK(grid.gap == doctest::Approx(0.5 * std::sqrt(2.0) * 0.6).epsilon(1e-12));

  // The seed permutes order but not the sample set or the gap.
  const SampleSet g2 = sample_data(vanderpol(), 16, 2);
  CHECK(g2.gap == grid.gap);
  double sum1 = 0.0, sum2 = 0.0;
  for (int i = 0; i < 16; ++i) {
    sum1 += grid.XU(0, i) * grid.XU(1, i);
    sum2 += g2.XU(0, i) * g2.XU(1, i);
  }
  CHECK(sum1 == doctest::Approx(sum2).epsilon(1e-12));
}

TEST_CASE("sampling covers the input axis too") {
  const SampleSet s = sample_data(pendulum(), 1000, 4);
  REQUIRE(s.XU.rows() == 3);
  CHECK(s.XU.cols() >= 1000);
  CHECK(s.XU.row(2).minCoeff() >= -20.0);
  CHECK(s.XU.row(2).maxCoeff() <= 20.0);
  CHECK(s.XU.row(2).maxCoeff() > 10.0);  // actually spreads over the axis
  CHECK(s.gap > 0.0);
}

}  // TEST_SUITE
