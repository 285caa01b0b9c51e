#pragma once

#include <cstdint>
#include <vector>

#include "lyap/dynamics.hpp"
#include "lyap/network.hpp"

namespace lyap {

// Configuration for fitting a one-hidden-layer model of the plant dynamics.
struct TrainConfig {
  int n_samples = 250'000;       // stratified training grid
  int eval_samples = 1'000'000;  // finer grid scanned when measuring alpha
  int hidden = 100;
  int batch = 512;
  int max_epochs = 200;
  double target_mse = 1e-6;  // early-stop threshold on the epoch MSE
  double lr = 0.01;
  double lr_min = 1e-5;
  int plateau_epochs = 10;  // epochs without improvement before lr /= 10
  std::uint64_t seed = 0;
  int workers = 1;  // shards for the residual scan after training
};

struct SysIdResult {
  OneHiddenNet model;
  double alpha = 0.0;       // max 2-norm residual over every stored sample
  double sample_gap = 0.0;  // covering radius of the sample grids
  double k_phi = 0.0;       // Lipschitz bound of the trained model
  // Entry 0 is the MSE of the fresh net; one entry per epoch after that.
  std::vector<double> mse_history;
  bool unconverged = false;  // target_mse not reached within max_epochs
};

// Fits phi(x,u) ~= f(x,u) over domain x input_box by minibatch Adam with a
// drop-on-plateau learning-rate schedule. After training, alpha is measured
// exactly over the union of the training grid and a finer evaluation grid, so
// every point of the product space lies within sample_gap of a sample whose
// residual is known to be at most alpha.
SysIdResult learn_dynamics(const ControlSystem& sys, const TrainConfig& cfg);

// Certified sup bound on ||f - phi||_2 over the whole product space:
// k_f * gap (true dynamics drift to the nearest sample) + alpha (worst known
// residual there) + k_phi * gap (model drift back).
double generalization_bound(const SysIdResult& r, double k_f);

}  // namespace lyap
