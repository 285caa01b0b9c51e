#include "lyap/lqr.hpp"

#include <cmath>
#include <stdexcept>

namespace lyap {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite())
    throw std::runtime_error(std::string("linearize: non-finite ") + what);
}

}  // namespace

Linearization linearize(const ControlSystem& sys) {
  const int n = sys.state_dim;
  const int m = sys.input_dim;
  const double h = 1e-6;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd& u0 = sys.equilibrium_shift;

  Linearization lin;
  lin.A.resize(n, n);
  lin.B.resize(n, m);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp(j) += h;
    xm(j) -= h;
    lin.A.col(j) = (sys.rhs(xp, u0) - sys.rhs(xm, u0)) / (2.0 * h);
  }
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd up = u0, um = u0;
    up(j) += h;
    um(j) -= h;
    lin.B.col(j) = (sys.rhs(x0, up) - sys.rhs(x0, um)) / (2.0 * h);
  }
  require_finite(lin.A, "A");
  require_finite(lin.B, "B");
  return lin;
}

LqrSolution solve_care(const Linearization& lin, const Eigen::MatrixXd& Q,
                       const Eigen::MatrixXd& R) {
  const Eigen::Index n = lin.A.rows();
  const Eigen::Index m = lin.B.cols();
  if (lin.A.cols() != n || lin.B.rows() != n)
    throw std::invalid_argument("solve_care: A/B shape mismatch");
  if (Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m)
    throw std::invalid_argument("solve_care: Q/R shape mismatch");
  if (!Q.isApprox(Q.transpose(), 1e-12) || !R.isApprox(R.transpose(), 1e-12))
    throw std::invalid_argument("solve_care: Q and R must be symmetric");

  Eigen::MatrixXd Rinv(m, m);
  if (m > 0) {
    const Eigen::LLT<Eigen::MatrixXd> llt(R);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("solve_care: R must be positive definite");
    Rinv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  if (m > 0) G = lin.B * Rinv * lin.B.transpose();

  Eigen::MatrixXd H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = lin.A;
  H.topRightCorner(n, n) = -G;
  H.bottomLeftCorner(n, n) = -Q;
  H.bottomRightCorner(n, n) = -lin.A.transpose();

  const Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(H.cast<std::complex<double>>());
  if (es.info() != Eigen::Success)
    throw std::runtime_error("solve_care: eigendecomposition failed");

  Eigen::MatrixXcd X(2 * n, n);
  Eigen::Index found = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (found == n)
        throw std::runtime_error(
            "solve_care: stable subspace larger than state dimension");
      X.col(found++) = es.eigenvectors().col(i);
    }
  }
  if (found != n)
    throw std::runtime_error(
        "solve_care: pair is not stabilizable (stable subspace too small)");

  const Eigen::MatrixXcd X1 = X.topRows(n);
  const Eigen::MatrixXcd X2 = X.bottomRows(n);
  const Eigen::FullPivLU<Eigen::MatrixXcd> lu(X1);
  if (!lu.isInvertible())
    throw std::runtime_error("solve_care: singular stable-subspace basis");

  LqrSolution sol;
  sol.P = (X2 * lu.inverse()).real();
  sol.P = 0.5 * (sol.P + sol.P.transpose()).eval();
  sol.K = m > 0 ? (Rinv * lin.B.transpose() * sol.P).eval()
                : Eigen::MatrixXd::Zero(0, n).eval();
  sol.Q = Q;
  sol.R = R;

  const Eigen::MatrixXd resid = lin.A.transpose() * sol.P + sol.P * lin.A -
                                sol.P * G * sol.P + Q;
  if (!(resid.norm() < 1e-8))
    throw std::runtime_error("solve_care: residual " +
                             std::to_string(resid.norm()) + " exceeds 1e-8");
  return sol;
}

LqrRoa lqr_roa(const LqrSolution& sol, const ControlSystem& sys, int grid) {
  const int n = sys.state_dim;
  if (n != 2)
    throw std::invalid_argument("lqr_roa: planar systems only");
  if (grid < 8) throw std::invalid_argument("lqr_roa: grid too coarse");

  // Largest origin-centered ball inside the region of validity.
  double r = sys.domain_radius;
  if (r <= 0.0) {
    r = std::numeric_limits<double>::infinity();
    for (const Interval& d : sys.domain.dims)
      r = std::min(r, std::min(std::abs(d.lo), std::abs(d.hi)));
  }

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sol.P);
  const Eigen::VectorXd evals = eig.eigenvalues();
  const Eigen::MatrixXd evecs = eig.eigenvectors();
  if (!(evals.minCoeff() > 0.0))
    throw std::invalid_argument("lqr_roa: P is not positive definite");

  LqrRoa out;
  double c_hi = r * r * evals.minCoeff();  // ellipse inscribed in the ball
  if (sys.name == "unicycle") {
    const double cap = M_PI / 9.0;
    const Eigen::MatrixXd Pinv = sol.P.inverse();
    const double c_cap = cap * cap / Pinv(1, 1);  // max |x2| on level c
    if (c_cap < c_hi) {
      c_hi = c_cap;
      out.angle_capped = true;
    }
  }

  const Eigen::MatrixXd half_inv =
      evecs * evals.cwiseSqrt().cwiseInverse().asDiagonal() *
      evecs.transpose();
  std::vector<Eigen::Vector2d> dirs(grid);
  for (int i = 0; i < grid; ++i) {
    const double phi = 2.0 * M_PI * i / grid;
    dirs[i] = half_inv * Eigen::Vector2d(std::cos(phi), std::sin(phi));
  }

  auto admissible = [&](double c) {
    for (const Eigen::Vector2d& d : dirs) {
      const Eigen::VectorXd x = std::sqrt(c) * d;
      const Eigen::VectorXd u =
          sys.input_dim > 0
              ? (sys.equilibrium_shift - sol.K * x).eval()
              : Eigen::VectorXd(0);
      if (2.0 * x.dot(sol.P * sys.rhs(x, u)) >= 0.0) return false;
    }
    return true;
  };

  double c_star;
  if (admissible(c_hi)) {
    c_star = c_hi;  // domain (or angle cap) limited, not dynamics limited
  } else {
    double lo = 0.0, hi = c_hi;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (admissible(mid) ? lo : hi) = mid;
    }
    c_star = lo;
  }

  out.c_star = c_star;
  out.area = M_PI * c_star / std::sqrt(sol.P.determinant());
  out.rim.reserve(grid);
  for (const Eigen::Vector2d& d : dirs)
    out.rim.push_back(std::sqrt(c_star) * d);
  return out;
}

}  // namespace lyap
