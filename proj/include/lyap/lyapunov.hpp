#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lyap/dynamics.hpp"
#include "lyap/network.hpp"
#include "lyap/sysid.hpp"
#include "lyap/verifier.hpp"

namespace lyap {

// Rate of change of V along the field dyn at x: gradient_x(V,x) . dyn(x).
double lie_derivative(
    const OneHiddenNet& V,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dyn,
    const Eigen::VectorXd& x);

// Symbolic counterpart: sum_i dV/dx_i * field_i, for the verifier.
ExprPtr lie_expr(const OneHiddenNet& V, const std::vector<ExprPtr>& field);

// Weights of the empirical risk that shapes V and the controller gain.
struct LyapRiskConfig {
  double C1 = 1.0;   // hinge on positivity: max(-V(x_i), 0)
  double C2 = 1.0;   // hinge on decrease: max(0, beta + lie(x_i))
  double C3 = 1.0;   // anchor V(0)^2
  double C4 = 0.01;  // batch max of ||dV/dx||, the surrogate for M
  bool roa_term = false;  // level-shaping term (||x_i|| - a V(x_i)) per point
  double a = 1.0;
  int batch = 500;    // points resampled over the domain each round
  double beta = 0.0;  // decrease margin targeted by the C2 hinge
};

struct RiskValue {
  double risk = 0.0;
  Eigen::VectorXd d_theta;  // layout of flatten(V)
  Eigen::MatrixXd d_gain;   // m x n; 0 x n when no controller is trained
};

// Empirical risk over the batch (columns are states) with exact gradients in
// the V parameters and the controller gain. The decrease hinge and its
// gradient run through the learned model phi with u = C tanh(kx + b)
// substituted; C and b stay fixed. Pass ctrl = nullptr for autonomous plants.
RiskValue lyapunov_risk(const OneHiddenNet& V, const SaturatingController* ctrl,
                        const OneHiddenNet& phi, const Eigen::MatrixXd& batch,
                        const LyapRiskConfig& cfg);

// Certified sup of ||dV/dx||_2 over the region, by bisection on levels the
// falsifier can refute: the returned M is either refuted nowhere in the
// region (proven) or the analytic spectral-norm product, and sits within 5%
// of the smallest provable level. If the box budget runs out before any
// level is proven, the analytic global bound is returned with loose = true.
struct GradNormBound {
  double M = 0.0;
  bool loose = false;
};
GradNormBound gradient_norm_bound(const OneHiddenNet& V, const Region& region,
                                  const FalsifyOptions& opt = {});

struct LearnLyapConfig {
  int hidden = 6;
  int epochs_per_round = 300;  // optimizer steps between falsifier calls
  int max_rounds = 50;
  double lr = 0.01;
  double eps = 0.1;        // radius of the excluded ball around the origin
  double precision = 0.01;  // falsifier splitting floor
  // The decrease margin must exceed M times the model-error bound; training
  // aims beta_train_slack above that, certification accepts beta_cert_slack.
  // risk.beta doubles as a fixed floor on the trained margin, which keeps
  // the optimizer away from the degenerate flat-V minimum of the auto-scaled
  // objective.
  double beta_train_slack = 1.5;
  double beta_cert_slack = 1.05;
  LyapRiskConfig risk;
  std::uint64_t seed = 0;
  int workers = 1;
  std::uint64_t falsify_max_boxes = 5'000'000;
  int screen_points = 4096;  // cheap sampled screen before each falsifier call
  // Test hook: observes every round's training batch (after counterexample
  // injection). Not used by the library itself.
  std::function<void(int round, const Eigen::MatrixXd& batch)> inspect_batch;
};

struct LyapResult {
  OneHiddenNet V;
  std::optional<SaturatingController> controller;
  double beta = 0.0;  // certified decrease margin (when certified)
  double M = 0.0;     // certified sup of ||dV/dx|| over the region
  std::vector<double> risk_history;  // one entry per optimizer step
  bool certified = false;
  bool m_loose = false;  // M fell back to the analytic global bound
  int rounds = 0;
  std::vector<Eigen::VectorXd> counterexamples;  // injected during training
};

// Counterexample-guided training of V (and the gain, when the plant has
// inputs) against the learned model sid.model. Each round: resample a batch,
// inject all accumulated counterexamples, descend the risk, then look for
// violations - first with a sampled screen, then with the falsifier. On a
// clean falsifier pass the decrease margin is re-derived from the certified
// gradient bound and checked once more before the result is certified.
// Throws if the initial gain does not stabilize the true linearization.
LyapResult learn_lyapunov(const SysIdResult& sid, const ControlSystem& sys,
                          const Eigen::MatrixXd& k_init,
                          const LearnLyapConfig& cfg);

}  // namespace lyap
