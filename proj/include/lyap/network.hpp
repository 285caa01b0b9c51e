#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lyap/expr.hpp"

namespace lyap {

// One-hidden-layer tanh network y = W2 tanh(W1 x + B1) + B2, with an
// optional tanh on the output. Dynamics models leave the output linear;
// Lyapunov candidates squash it.
struct OneHiddenNet {
  Eigen::MatrixXd W1;  // hidden x in
  Eigen::VectorXd B1;  // hidden
  Eigen::MatrixXd W2;  // out x hidden
  Eigen::VectorXd B2;  // out
  bool output_tanh = false;

  int in_dim() const { return static_cast<int>(W1.cols()); }
  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  int out_dim() const { return static_cast<int>(W2.rows()); }
};

// Fresh net with weights uniform in +-1/sqrt(fan_in), deterministic in seed.
OneHiddenNet make_net(int in, int hidden, int out, bool output_tanh,
                      std::uint64_t seed);

Eigen::VectorXd forward(const OneHiddenNet& net, const Eigen::VectorXd& x);
// Columns are samples.
Eigen::MatrixXd forward_batch(const OneHiddenNet& net, const Eigen::MatrixXd& X);

// Analytic Jacobian dy/dx at a point (out x in).
Eigen::MatrixXd gradient_x(const OneHiddenNet& net, const Eigen::VectorXd& x);

// Parameter gradients of a batch loss, given dL/dy per sample (columns).
// Gradients are summed over the batch; fold any 1/N into loss_grads.
struct NetGrads {
  Eigen::MatrixXd W1;
  Eigen::VectorXd B1;
  Eigen::MatrixXd W2;
  Eigen::VectorXd B2;
};
NetGrads backward(const OneHiddenNet& net, const Eigen::MatrixXd& X,
                  const Eigen::MatrixXd& loss_grads);

// Flat parameter order: W1 row-major, B1, W2 row-major, B2.
Eigen::VectorXd flatten(const OneHiddenNet& net);
void unflatten(OneHiddenNet& net, const Eigen::VectorXd& theta);
Eigen::VectorXd flatten(const NetGrads& g);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  Eigen::VectorXd m, v;  // sized on first use
};
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& st);

// Sound Lipschitz upper bound in the 2-norm: ||W2||_2 * ||W1||_2 (tanh slopes
// are at most 1, including the optional output tanh). Spectral norms by power
// iteration to 1e-10 relative, inflated one part in 1e9 to cover the
// iteration's approach from below.
double lipschitz_upper(const OneHiddenNet& net);

// The saturating controller u = C tanh(k x + b). C is diagonal and fixed, b
// is fixed at construction (solved so the closed loop holds the origin), and
// only k is trained.
struct SaturatingController {
  Eigen::MatrixXd C;  // m x m, diagonal
  Eigen::MatrixXd k;  // m x n
  Eigen::VectorXd b;  // m
};

Eigen::VectorXd control(const SaturatingController& ctrl,
                        const Eigen::VectorXd& x);

// Per-channel bisection for b with C tanh(b) = u0, the feedforward input
// that makes the origin an equilibrium. Throws if |u0_c| >= |C_cc| (the
// saturation cannot reach the required feedforward).
Eigen::VectorXd solve_saturating_bias(const Eigen::MatrixXd& C,
                                      const Eigen::VectorXd& u0);

// Expression-tree builders for the verifier. Hidden units are shared nodes,
// so multi-output nets and their derivatives compile to compact tapes.
std::vector<ExprPtr> net_expr(const OneHiddenNet& net,
                              const std::vector<ExprPtr>& x);
std::vector<ExprPtr> controller_expr(const SaturatingController& ctrl,
                                     const std::vector<ExprPtr>& x);

// Self-describing text files, 17 significant digits (lossless for doubles).
void save_net(const OneHiddenNet& net, const std::string& path);
OneHiddenNet load_net(const std::string& path);
void save_controller(const SaturatingController& ctrl, const std::string& path);
SaturatingController load_controller(const std::string& path);

}  // namespace lyap
