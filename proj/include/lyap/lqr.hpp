#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lyap/dynamics.hpp"

namespace lyap {

// First-order model of the plant about its equilibrium (0, u0).
struct Linearization {
  Eigen::MatrixXd A;  // n x n
  Eigen::MatrixXd B;  // n x m (zero columns for autonomous plants)
};

// Central finite differences with step 1e-6 about (0, u0).
Linearization linearize(const ControlSystem& sys);

struct LqrSolution {
  Eigen::MatrixXd K;  // m x n feedback gain, u = u0 - K x
  Eigen::MatrixXd P;  // n x n Riccati solution, symmetric positive definite
  Eigen::MatrixXd Q;  // weights actually used, kept for reporting
  Eigen::MatrixXd R;
};

// Solves A'P + PA - PBR^-1B'P + Q = 0 by selecting the stable invariant
// subspace of the Hamiltonian [[A, -BR^-1B'], [-Q, -A']]; K = R^-1 B' P.
// With no input columns this degenerates to the Lyapunov equation, which
// requires A itself to be stable. Throws if no n-dimensional stable subspace
// exists or the residual exceeds 1e-8.
LqrSolution solve_care(const Linearization& lin, const Eigen::MatrixXd& Q,
                       const Eigen::MatrixXd& R);

// Sampled comparison region {x'Px <= c_star} for the loop u = u0 - Kx on the
// true dynamics: the largest level whose rim keeps d/dt(x'Px) < 0 on a dense
// angular grid, never extending past the domain. Comparison-grade only; no
// interval certificate is attached. The path-following benchmark additionally
// caps the set at |heading error| < pi/9, its usual small-angle range.
struct LqrRoa {
  double c_star = 0.0;
  double area = 0.0;  // exact ellipse area (planar systems only)
  std::vector<Eigen::VectorXd> rim;
  bool angle_capped = false;
};

LqrRoa lqr_roa(const LqrSolution& sol, const ControlSystem& sys,
               int grid = 720);

}  // namespace lyap
