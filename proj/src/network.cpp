#include "lyap/network.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lyap {

namespace {

double uniform_pm(std::mt19937_64& eng, double half_range) {
  const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;  // [0,1)
  return half_range * (2.0 * u - 1.0);
}

void check_in_dim(const OneHiddenNet& net, const Eigen::Index rows,
                  const char* who) {
  if (rows != net.in_dim())
    throw std::invalid_argument(std::string(who) + ": input dimension mismatch");
}

}  // namespace

OneHiddenNet make_net(int in, int hidden, int out, bool output_tanh,
                      std::uint64_t seed) {
  if (in < 1 || hidden < 1 || out < 1)
    throw std::invalid_argument("make_net: dims must be positive");
  OneHiddenNet net;
  net.W1.resize(hidden, in);
  net.B1.resize(hidden);
  net.W2.resize(out, hidden);
  net.B2.resize(out);
  net.output_tanh = output_tanh;
  std::mt19937_64 eng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int i = 0; i < hidden; ++i)
    for (int j = 0; j < in; ++j) net.W1(i, j) = uniform_pm(eng, r1);
  for (int i = 0; i < hidden; ++i) net.B1(i) = uniform_pm(eng, r1);
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < hidden; ++j) net.W2(i, j) = uniform_pm(eng, r2);
  for (int i = 0; i < out; ++i) net.B2(i) = uniform_pm(eng, r2);
  return net;
}

Eigen::VectorXd forward(const OneHiddenNet& net, const Eigen::VectorXd& x) {
  check_in_dim(net, x.size(), "forward");
  const Eigen::VectorXd h = ((net.W1 * x + net.B1).array().tanh()).matrix();
  Eigen::VectorXd y = net.W2 * h + net.B2;
  if (net.output_tanh) y = y.array().tanh().matrix();
  return y;
}

Eigen::MatrixXd forward_batch(const OneHiddenNet& net,
                              const Eigen::MatrixXd& X) {
  check_in_dim(net, X.rows(), "forward_batch");
  const Eigen::MatrixXd h =
      ((net.W1 * X).colwise() + net.B1).array().tanh().matrix();
  Eigen::MatrixXd y = (net.W2 * h).colwise() + net.B2;
  if (net.output_tanh) y = y.array().tanh().matrix();
  return y;
}

Eigen::MatrixXd gradient_x(const OneHiddenNet& net, const Eigen::VectorXd& x) {
  check_in_dim(net, x.size(), "gradient_x");
  const Eigen::VectorXd h = ((net.W1 * x + net.B1).array().tanh()).matrix();
  const Eigen::VectorXd slope = (1.0 - h.array().square()).matrix();
  Eigen::MatrixXd J = net.W2 * slope.asDiagonal() * net.W1;
  if (net.output_tanh) {
    const Eigen::VectorXd y = ((net.W2 * h + net.B2).array().tanh()).matrix();
    J = (1.0 - y.array().square()).matrix().asDiagonal() * J;
  }
  return J;
}

NetGrads backward(const OneHiddenNet& net, const Eigen::MatrixXd& X,
                  const Eigen::MatrixXd& loss_grads) {
  check_in_dim(net, X.rows(), "backward");
  if (loss_grads.rows() != net.out_dim() || loss_grads.cols() != X.cols())
    throw std::invalid_argument("backward: loss_grads shape mismatch");
  const Eigen::MatrixXd h =
      ((net.W1 * X).colwise() + net.B1).array().tanh().matrix();
  Eigen::MatrixXd g2 = loss_grads;
  if (net.output_tanh) {
    const Eigen::MatrixXd y =
        ((net.W2 * h).colwise() + net.B2).array().tanh().matrix();
    g2 = (loss_grads.array() * (1.0 - y.array().square())).matrix();
  }
  const Eigen::MatrixXd g1 =
      ((net.W2.transpose() * g2).array() * (1.0 - h.array().square())).matrix();
  NetGrads g;
  g.W2 = g2 * h.transpose();
  g.B2 = g2.rowwise().sum();
  g.W1 = g1 * X.transpose();
  g.B1 = g1.rowwise().sum();
  if (!g.W1.allFinite() || !g.B1.allFinite() || !g.W2.allFinite() ||
      !g.B2.allFinite()) {
    // Locate the first offending sample for the error message.
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (!g2.col(j).allFinite() || !g1.col(j).allFinite() ||
          !X.col(j).allFinite()) {
        throw std::runtime_error("backward: non-finite gradient at batch index " +
                                 std::to_string(j));
      }
    }
    throw std::runtime_error("backward: non-finite gradient");
  }
  return g;
}

Eigen::VectorXd flatten(const OneHiddenNet& net) {
  Eigen::VectorXd v(net.W1.size() + net.B1.size() + net.W2.size() +
                    net.B2.size());
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < net.W1.rows(); ++i)
    for (Eigen::Index j = 0; j < net.W1.cols(); ++j) v(at++) = net.W1(i, j);
  for (Eigen::Index i = 0; i < net.B1.size(); ++i) v(at++) = net.B1(i);
  for (Eigen::Index i = 0; i < net.W2.rows(); ++i)
    for (Eigen::Index j = 0; j < net.W2.cols(); ++j) v(at++) = net.W2(i, j);
  for (Eigen::Index i = 0; i < net.B2.size(); ++i) v(at++) = net.B2(i);
  return v;
}

void unflatten(OneHiddenNet& net, const Eigen::VectorXd& theta) {
  const Eigen::Index need =
      net.W1.size() + net.B1.size() + net.W2.size() + net.B2.size();
  if (theta.size() != need)
    throw std::invalid_argument("unflatten: parameter count mismatch");
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < net.W1.rows(); ++i)
    for (Eigen::Index j = 0; j < net.W1.cols(); ++j) net.W1(i, j) = theta(at++);
  for (Eigen::Index i = 0; i < net.B1.size(); ++i) net.B1(i) = theta(at++);
  for (Eigen::Index i = 0; i < net.W2.rows(); ++i)
    for (Eigen::Index j = 0; j < net.W2.cols(); ++j) net.W2(i, j) = theta(at++);
  for (Eigen::Index i = 0; i < net.B2.size(); ++i) net.B2(i) = theta(at++);
}

Eigen::VectorXd flatten(const NetGrads& g) {
  OneHiddenNet shim;
  shim.W1 = g.W1;
  shim.B1 = g.B1;
  shim.W2 = g.W2;
  shim.B2 = g.B2;
  return flatten(shim);
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& st) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (st.m.size() != params.size()) {
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
    st.step = 0;
  }
  st.step += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
  st.v = (st.beta2 * st.v.array() + (1.0 - st.beta2) * grads.array().square())
             .matrix();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -=
      st.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

namespace {

double spectral_norm(const Eigen::MatrixXd& A) {
  if (A.size() == 0 || A.isZero(0.0)) return 0.0;
  // Power iteration on A^T A from a fixed start; converges to sigma_max^2
  // from below for symmetric PSD iterates.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(A.cols());
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = A.transpose() * (A * v);
    const double lambda = w.norm();
    if (lambda == 0.0) return 0.0;
    v = w / lambda;
    const double next = std::sqrt(lambda);
    if (std::abs(next - sigma) <= 1e-10 * next) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return sigma * (1.0 + 1e-9);
}

}  // namespace

double lipschitz_upper(const OneHiddenNet& net) {
  const double s1 = spectral_norm(net.W1);
  const double s2 = spectral_norm(net.W2);
  return s1 * s2;
}

Eigen::VectorXd control(const SaturatingController& ctrl,
                        const Eigen::VectorXd& x) {
  if (x.size() != ctrl.k.cols())
    throw std::invalid_argument("control: input dimension mismatch");
  return ctrl.C * ((ctrl.k * x + ctrl.b).array().tanh()).matrix();
}

Eigen::VectorXd solve_saturating_bias(const Eigen::MatrixXd& C,
                                      const Eigen::VectorXd& u0) {
  if (C.rows() != C.cols() || C.rows() != u0.size())
    throw std::invalid_argument("solve_saturating_bias: shape mismatch");
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    for (Eigen::Index j = 0; j < C.cols(); ++j)
      if (i != j && C(i, j) != 0.0)
        throw std::invalid_argument("solve_saturating_bias: C must be diagonal");
  Eigen::VectorXd b(u0.size());
  for (Eigen::Index c = 0; c < u0.size(); ++c) {
    const double cap = C(c, c);
    if (cap == 0.0) {
      if (u0(c) != 0.0)
        throw std::invalid_argument(
            "solve_saturating_bias: zero saturation cannot reach feedforward");
      b(c) = 0.0;
      continue;
    }
    const double target = u0(c) / cap;  // need tanh(b_c) = target
    if (std::abs(target) >= 1.0)
      throw std::invalid_argument(
          "solve_saturating_bias: feedforward exceeds saturation");
    double lo = -40.0, hi = 40.0;  // tanh is +-1 to machine precision here
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (std::tanh(mid) < target)
        lo = mid;
      else
        hi = mid;
    }
    b(c) = 0.5 * (lo + hi);
  }
  return b;
}

std::vector<ExprPtr> net_expr(const OneHiddenNet& net,
                              const std::vector<ExprPtr>& x) {
  if (static_cast<int>(x.size()) != net.in_dim())
    throw std::invalid_argument("net_expr: input dimension mismatch");
  std::vector<ExprPtr> hidden;
  hidden.reserve(net.hidden_dim());
  for (int i = 0; i < net.hidden_dim(); ++i) {
    ExprPtr z = cst(net.B1(i));
    for (int j = 0; j < net.in_dim(); ++j)
      z = add(std::move(z), mul(cst(net.W1(i, j)), x[j]));
    hidden.push_back(tanh(std::move(z)));
  }
  std::vector<ExprPtr> out;
  out.reserve(net.out_dim());
  for (int o = 0; o < net.out_dim(); ++o) {
    ExprPtr z = cst(net.B2(o));
    for (int i = 0; i < net.hidden_dim(); ++i)
      z = add(std::move(z), mul(cst(net.W2(o, i)), hidden[i]));
    out.push_back(net.output_tanh ? tanh(std::move(z)) : std::move(z));
  }
  return out;
}

std::vector<ExprPtr> controller_expr(const SaturatingController& ctrl,
                                     const std::vector<ExprPtr>& x) {
  if (static_cast<Eigen::Index>(x.size()) != ctrl.k.cols())
    throw std::invalid_argument("controller_expr: input dimension mismatch");
  for (Eigen::Index i = 0; i < ctrl.C.rows(); ++i)
    for (Eigen::Index j = 0; j < ctrl.C.cols(); ++j)
      if (i != j && ctrl.C(i, j) != 0.0)
        throw std::invalid_argument("controller_expr: C must be diagonal");
  std::vector<ExprPtr> u;
  u.reserve(ctrl.k.rows());
  for (Eigen::Index c = 0; c < ctrl.k.rows(); ++c) {
    ExprPtr z = cst(ctrl.b(c));
    for (Eigen::Index j = 0; j < ctrl.k.cols(); ++j)
      z = add(std::move(z), mul(cst(ctrl.k(c, j)), x[j]));
    u.push_back(mul(cst(ctrl.C(c, c)), tanh(std::move(z))));
  }
  return u;
}

namespace {

void write_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << m(i, j);
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_matrix(std::istream& is, Eigen::Index rows,
                            Eigen::Index cols, const char* what) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (!(is >> m(i, j)))
        throw std::runtime_error(std::string("load: truncated or malformed ") +
                                 what);
  return m;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << std::setprecision(17);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return is;
}

}  // namespace

void save_net(const OneHiddenNet& net, const std::string& path) {
  std::ofstream os = open_out(path);
  os << "onehidden 1\n";
  os << "dims " << net.in_dim() << ' ' << net.hidden_dim() << ' '
     << net.out_dim() << ' ' << (net.output_tanh ? 1 : 0) << '\n';
  write_matrix(os, net.W1);
  write_matrix(os, net.B1);
  write_matrix(os, net.W2);
  write_matrix(os, net.B2);
  if (!os) throw std::runtime_error("write failed: " + path);
}

OneHiddenNet load_net(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string magic, dims;
  int version = 0;
  if (!(is >> magic >> version) || magic != "onehidden" || version != 1)
    throw std::runtime_error("load_net: not a network file: " + path);
  int in = 0, hidden = 0, out = 0, ot = 0;
  if (!(is >> dims >> in >> hidden >> out >> ot) || dims != "dims" || in < 1 ||
      hidden < 1 || out < 1 || (ot != 0 && ot != 1))
    throw std::runtime_error("load_net: bad shape header: " + path);
  OneHiddenNet net;
  net.W1 = read_matrix(is, hidden, in, "W1");
  net.B1 = read_matrix(is, hidden, 1, "B1");
  net.W2 = read_matrix(is, out, hidden, "W2");
  net.B2 = read_matrix(is, out, 1, "B2");
  net.output_tanh = ot == 1;
  return net;
}

void save_controller(const SaturatingController& ctrl,
                     const std::string& path) {
  std::ofstream os = open_out(path);
  os << "saturating-controller 1\n";
  os << "dims " << ctrl.k.cols() << ' ' << ctrl.k.rows() << '\n';
  write_matrix(os, ctrl.C);
  write_matrix(os, ctrl.k);
  write_matrix(os, ctrl.b);
  if (!os) throw std::runtime_error("write failed: " + path);
}

SaturatingController load_controller(const std::string& path) {
  std::ifstream is = open_in(path);
  std::string magic, dims;
  int version = 0;
  if (!(is >> magic >> version) || magic != "saturating-controller" ||
      version != 1)
    throw std::runtime_error("load_controller: not a controller file: " + path);
  int n = 0, m = 0;
  if (!(is >> dims >> n >> m) || dims != "dims" || n < 1 || m < 1)
    throw std::runtime_error("load_controller: bad shape header: " + path);
  SaturatingController ctrl;
  ctrl.C = read_matrix(is, m, m, "C");
  ctrl.k = read_matrix(is, m, n, "k");
  ctrl.b = read_matrix(is, m, 1, "b");
  return ctrl;
}

}  // namespace lyap
