#include "lyap/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lyap {

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

void check_dims(const ControlSystem& sys, const Eigen::VectorXd& x,
                const Eigen::VectorXd& u) {
  if (x.size() != sys.state_dim || u.size() != sys.input_dim)
    throw std::invalid_argument(sys.name + ": rhs dimension mismatch");
}

}  // namespace

ControlSystem vanderpol() {
  ControlSystem sys;
  sys.name = "vanderpol";
  sys.state_dim = 2;
  sys.input_dim = 0;
  sys.domain = Box::cube(2, 1.2);
  sys.domain_radius = 1.2;
  sys.jacobian_bound = 3.4599;
  sys.equilibrium_shift = Eigen::VectorXd(0);
  sys.rhs = [sys](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    check_dims(sys, x, u);
    return vec2(-x(1), x(0) + (x(0) * x(0) - 1.0) * x(1));
  };
  sys.rhs_expr = [](const std::vector<ExprPtr>& x,
                    const std::vector<ExprPtr>&) -> std::vector<ExprPtr> {
    return {neg(x[1]), add(x[0], mul(sub(sqr(x[0]), cst(1.0)), x[1]))};
  };
  return sys;
}

ControlSystem unicycle() {
  // Path-following errors of a unit-speed unicycle tracking the unit circle
  // (curvature 1): states are the distance error d_e and heading error
  // theta_e, the input is the angular rate.
  ControlSystem sys;
  sys.name = "unicycle";
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.domain = Box::cube(2, 0.8);
  sys.domain_radius = 0.8;
  sys.input_box = Box(std::vector<Interval>{Interval(-5.0, 5.0)});
  sys.jacobian_bound = 45.0;
  sys.equilibrium_shift = Eigen::VectorXd::Ones(1);
  sys.rhs = [sys](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    check_dims(sys, x, u);
    // The model has a pole at d_e = 1; treat approaching it as an error
    // rather than returning a huge or non-finite value.
    if (std::abs(x(0)) > 0.95)
      throw std::domain_error("unicycle: d_e out of the safe range [-0.95, 0.95]");
    return vec2(std::sin(x(1)), u(0) - std::cos(x(1)) / (1.0 - x(0)));
  };
  sys.rhs_expr = [](const std::vector<ExprPtr>& x,
                    const std::vector<ExprPtr>& u) -> std::vector<ExprPtr> {
    return {sin(x[1]), sub(u[0], div(cos(x[1]), sub(cst(1.0), x[0])))};
  };
  return sys;
}

ControlSystem pendulum() {
  // Inverted pendulum: theta acceleration (m g l sin(theta) + u - 0.1
  // thetadot) / (m l^2) with g = 9.81, m = 0.15, l = 0.5.
  constexpr double kTorqueGain = 0.15 * 9.81 * 0.5;  // m g l
  constexpr double kInertia = 0.15 * 0.5 * 0.5;      // m l^2
  ControlSystem sys;
  sys.name = "pendulum";
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.domain = Box::cube(2, 4.0);
  sys.domain_radius = 4.0;
  sys.input_box = Box(std::vector<Interval>{Interval(-20.0, 20.0)});
  sys.jacobian_bound = 33.214;
  sys.equilibrium_shift = Eigen::VectorXd::Zero(1);
  sys.rhs = [sys](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    check_dims(sys, x, u);
    return vec2(x(1),
                (kTorqueGain * std::sin(x(0)) + u(0) - 0.1 * x(1)) / kInertia);
  };
  sys.rhs_expr = [](const std::vector<ExprPtr>& x,
                    const std::vector<ExprPtr>& u) -> std::vector<ExprPtr> {
    const ExprPtr torque = add(
        add(mul(cst(kTorqueGain), sin(x[0])), u[0]), mul(cst(-0.1), x[1]));
    return {x[1], div(torque, cst(kInertia))};
  };
  return sys;
}

ControlSystem system_by_name(const std::string& name) {
  if (name == "vanderpol") return vanderpol();
  if (name == "unicycle") return unicycle();
  if (name == "pendulum") return pendulum();
  throw std::invalid_argument("unknown system: " + name);
}

ControlSystem linear_system(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            double half_width) {
  if (A.rows() != A.cols() || B.rows() != A.rows())
    throw std::invalid_argument("linear_system: shape mismatch");
  ControlSystem sys;
  sys.name = "linear";
  sys.state_dim = static_cast<int>(A.rows());
  sys.input_dim = static_cast<int>(B.cols());
  sys.domain = Box::cube(sys.state_dim, half_width);
  sys.input_box = Box(std::vector<Interval>(
      sys.input_dim, Interval(-half_width, half_width)));
  // ||J||_2 = ||[A B]||_2 bounds the joint Lipschitz constant; Frobenius
  // bounds that.
  Eigen::MatrixXd AB(A.rows(), A.cols() + B.cols());
  AB << A, B;
  sys.jacobian_bound = AB.norm();
  sys.equilibrium_shift = Eigen::VectorXd::Zero(sys.input_dim);
  sys.rhs = [A, B, sys](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    check_dims(sys, x, u);
    return Eigen::VectorXd(A * x + B * u);
  };
  sys.rhs_expr = [A, B](const std::vector<ExprPtr>& x,
                        const std::vector<ExprPtr>& u) {
    std::vector<ExprPtr> out;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      ExprPtr acc = cst(0.0);
      for (Eigen::Index j = 0; j < A.cols(); ++j)
        acc = add(std::move(acc), mul(cst(A(i, j)), x[j]));
      for (Eigen::Index j = 0; j < B.cols(); ++j)
        acc = add(std::move(acc), mul(cst(B(i, j)), u[j]));
      out.push_back(std::move(acc));
    }
    return out;
  };
  return sys;
}

Eigen::VectorXd ClosedLoopSystem::eval(const Eigen::VectorXd& x) const {
  if (controller) return plant.rhs(x, control(*controller, x));
  return plant.rhs(x, Eigen::VectorXd(0));
}

std::vector<ExprPtr> ClosedLoopSystem::expr(
    const std::vector<ExprPtr>& x) const {
  if (controller) return plant.rhs_expr(x, controller_expr(*controller, x));
  return plant.rhs_expr(x, {});
}

ClosedLoopSystem close_loop(const ControlSystem& plant,
                            const SaturatingController& ctrl) {
  if (ctrl.k.cols() != plant.state_dim || ctrl.k.rows() != plant.input_dim)
    throw std::invalid_argument("close_loop: controller dimension mismatch");
  ClosedLoopSystem sys;
  sys.plant = plant;
  sys.controller = ctrl;
  sys.origin_residual =
      sys.eval(Eigen::VectorXd::Zero(plant.state_dim)).norm();
  return sys;
}

ClosedLoopSystem autonomous(const ControlSystem& plant) {
  if (plant.input_dim != 0)
    throw std::invalid_argument("autonomous: plant expects an input");
  ClosedLoopSystem sys;
  sys.plant = plant;
  sys.origin_residual =
      sys.eval(Eigen::VectorXd::Zero(plant.state_dim)).norm();
  return sys;
}

Eigen::VectorXd step_rk4(const ClosedLoopSystem& sys, const Eigen::VectorXd& x,
                         double dt) {
  const Eigen::VectorXd k1 = sys.eval(x);
  const Eigen::VectorXd k2 = sys.eval(x + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = sys.eval(x + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = sys.eval(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory simulate(const ClosedLoopSystem& sys, const Eigen::VectorXd& x0,
                    double t_end, double dt) {
  if (!(dt > 0.0) || t_end < dt)
    throw std::invalid_argument("simulate: need dt > 0 and t_end >= dt");
  // Divergence guard: 10x the domain box around the origin.
  Eigen::VectorXd guard(sys.plant.state_dim);
  for (int i = 0; i < sys.plant.state_dim; ++i) {
    const Interval d = sys.plant.domain.dims[i];
    guard(i) = 10.0 * std::max(std::abs(d.lo), std::abs(d.hi));
  }
  Trajectory tr;
  const auto steps = static_cast<std::int64_t>(std::ceil(t_end / dt - 1e-9));
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  Eigen::VectorXd x = x0;
  tr.times.push_back(0.0);
  tr.states.push_back(x);
  for (std::int64_t i = 1; i <= steps; ++i) {
    Eigen::VectorXd next;
    try {
      next = step_rk4(sys, x, dt);
    } catch (const std::domain_error&) {
      tr.diverged = true;  // left the model's region of validity
      return tr;
    }
    if (!next.allFinite()) {
      tr.nonfinite = true;
      return tr;
    }
    if ((next.array().abs() > guard.array()).any()) {
      tr.diverged = true;
      return tr;
    }
    x = std::move(next);
    tr.times.push_back(i * dt);
    tr.states.push_back(x);
  }
  return tr;
}

SampleSet sample_data(const ControlSystem& sys, std::int64_t n_samples,
                      std::uint64_t seed) {
  if (n_samples < 2)
    throw std::invalid_argument("sample_data: need at least 2 samples");
  const int d = sys.state_dim + sys.input_dim;
  std::vector<Interval> axes = sys.domain.dims;
  for (const auto& i : sys.input_box.dims) axes.push_back(i);

  // Grow per-axis cell counts, widest current cell first, until the grid is
  // big enough. Deterministic, and keeps cells near-cubical.
  std::vector<std::int64_t> counts(d, 1);
  auto total = [&] {
    std::int64_t t = 1;
    for (auto c : counts) t *= c;
    return t;
  };
  while (total() < n_samples) {
    int widest = 0;
    double w = -1.0;
    for (int i = 0; i < d; ++i) {
      const double cell = axes[i].width() / static_cast<double>(counts[i]);
      if (cell > w) {
        w = cell;
        widest = i;
      }
    }
    counts[widest] += 1;
  }
  const std::int64_t n = total();
  double diag_sq = 0.0;
  for (int i = 0; i < d; ++i) {
    const double cell = axes[i].width() / static_cast<double>(counts[i]);
    diag_sq += cell * cell;
  }

  SampleSet set;
  set.gap = 0.5 * std::sqrt(diag_sq);
  set.XU.resize(d, n);
  set.Y.resize(sys.state_dim, n);
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 eng(seed);
  for (std::int64_t i = n - 1; i > 0; --i) {
    const std::int64_t j = static_cast<std::int64_t>(eng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  Eigen::VectorXd x(sys.state_dim), u(sys.input_dim);
  for (std::int64_t col = 0; col < n; ++col) {
    std::int64_t idx = order[col];
    for (int i = 0; i < d; ++i) {
      const std::int64_t ci = idx % counts[i];
      idx /= counts[i];
      const double cell = axes[i].width() / static_cast<double>(counts[i]);
      const double v = axes[i].lo + (static_cast<double>(ci) + 0.5) * cell;
      set.XU(i, col) = v;
      if (i < sys.state_dim)
        x(i) = v;
      else
        u(i - sys.state_dim) = v;
    }
    set.Y.col(col) = sys.rhs(x, u);
  }
  return set;
}

}  // namespace lyap
