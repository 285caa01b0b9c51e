#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lyap/expr.hpp"
#include "lyap/interval.hpp"
#include "lyap/network.hpp"

namespace lyap {

// A control system xdot = f(x, u) restricted to a valid region. The region
// is the euclidean ball ||x|| <= domain_radius when that is positive,
// otherwise just the domain box; `domain` is always the axis-aligned hull.
struct ControlSystem {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  Box domain;
  double domain_radius = 0.0;
  Box input_box;  // empty for autonomous systems
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>
      rhs;
  // Same field as an expression builder, for the verifier.
  std::function<std::vector<ExprPtr>(const std::vector<ExprPtr>&,
                                     const std::vector<ExprPtr>&)>
      rhs_expr;
  double jacobian_bound = 0.0;  // K_f, a known Lipschitz bound on f
  Eigen::VectorXd equilibrium_shift;  // u0 with f(0, u0) = 0
};

// Benchmarks. Constants and domains follow the shipped certificates.
ControlSystem vanderpol();
ControlSystem unicycle();
ControlSystem pendulum();
ControlSystem system_by_name(const std::string& name);

// Linear plant xdot = A x + B u on a centered box, for tests and oracles.
ControlSystem linear_system(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            double half_width);

// Plant with its feedback loop closed; evaluates x -> f(x, kappa(x)).
// The residual ||f(0, kappa(0))|| is recorded rather than enforced: solved
// biases drive it to ~1e-12, but an externally supplied controller may hold
// the origin only approximately.
struct ClosedLoopSystem {
  ControlSystem plant;
  std::optional<SaturatingController> controller;
  double origin_residual = 0.0;

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
  std::vector<ExprPtr> expr(const std::vector<ExprPtr>& x) const;
};

ClosedLoopSystem close_loop(const ControlSystem& plant,
                            const SaturatingController& ctrl);
// For input-free plants.
ClosedLoopSystem autonomous(const ControlSystem& plant);

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  // Rollout left the 10x-domain guard box (solution escaping any region of
  // validity) or produced a non-finite state; in both cases the trajectory
  // is truncated at the last valid sample.
  bool diverged = false;
  bool nonfinite = false;
};

// One classic fourth-order Runge-Kutta step.
Eigen::VectorXd step_rk4(const ClosedLoopSystem& sys, const Eigen::VectorXd& x,
                         double dt);

Trajectory simulate(const ClosedLoopSystem& sys, const Eigen::VectorXd& x0,
                    double t_end, double dt);

// Cell-centered stratified grid over domain x input_box. The per-axis cell
// counts are grown greedily (largest cell first) until the grid holds at
// least n_samples points, so cells stay near-cubical and
//   gap = half the cell diagonal
// is a certified covering radius, not an estimate. The seed only shuffles
// sample order.
struct SampleSet {
  Eigen::MatrixXd XU;  // (state_dim + input_dim) x N
  Eigen::MatrixXd Y;   // state_dim x N, f at each sample
  double gap = 0.0;
};
SampleSet sample_data(const ControlSystem& sys, std::int64_t n_samples,
                      std::uint64_t seed);

}  // namespace lyap
