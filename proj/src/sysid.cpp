#include "lyap/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace lyap {

namespace {

constexpr Eigen::Index kChunk = 8192;

// Mean over columns of the squared residual 2-norm, evaluated in chunks so
// huge sample sets never materialize a full hidden-activation matrix.
double full_mse(const OneHiddenNet& net, const Eigen::MatrixXd& XU,
                const Eigen::MatrixXd& Y) {
  const Eigen::Index n = XU.cols();
  double sum = 0.0;
  for (Eigen::Index at = 0; at < n; at += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - at);
    const Eigen::MatrixXd pred = forward_batch(net, XU.middleCols(at, len));
    sum += (pred - Y.middleCols(at, len)).squaredNorm();
  }
  return sum / static_cast<double>(n);
}

// Largest per-column residual 2-norm, sharded over worker threads. Each
// worker owns a contiguous column range; a max of maxes is order-free, so the
// result is identical for any worker count.
double max_residual(const OneHiddenNet& net, const Eigen::MatrixXd& XU,
                    const Eigen::MatrixXd& Y, int workers) {
  const Eigen::Index n = XU.cols();
  if (n == 0) return 0.0;
  const int nw = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<double> best(nw, 0.0);
  auto scan = [&](int w) {
    const Eigen::Index lo = n * w / nw;
    const Eigen::Index hi = n * (w + 1) / nw;
    double m = 0.0;
    for (Eigen::Index at = lo; at < hi; at += kChunk) {
      const Eigen::Index len = std::min(kChunk, hi - at);
      const Eigen::MatrixXd pred = forward_batch(net, XU.middleCols(at, len));
      const Eigen::RowVectorXd norms =
          (pred - Y.middleCols(at, len)).colwise().norm();
      m = std::max(m, norms.maxCoeff());
    }
    best[w] = m;
  };
  if (nw == 1) {
    scan(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(scan, w);
    for (auto& t : pool) t.join();
  }
  return *std::max_element(best.begin(), best.end());
}

}  // namespace

SysIdResult learn_dynamics(const ControlSystem& sys, const TrainConfig& cfg) {
  if (cfg.hidden < 1) throw std::invalid_argument("learn_dynamics: hidden < 1");
  if (cfg.batch < 1) throw std::invalid_argument("learn_dynamics: batch < 1");
  if (cfg.n_samples < 1 || cfg.eval_samples < 1)
    throw std::invalid_argument("learn_dynamics: sample counts must be >= 1");
  if (!(cfg.lr > 0.0) || !(cfg.lr_min > 0.0) || cfg.lr < cfg.lr_min)
    throw std::invalid_argument("learn_dynamics: need lr >= lr_min > 0");
  if (cfg.max_epochs < 0)
    throw std::invalid_argument("learn_dynamics: max_epochs < 0");

  const SampleSet train = sample_data(sys, cfg.n_samples, cfg.seed);
  const int in_dim = sys.state_dim + sys.input_dim;

  SysIdResult out;
  out.model = make_net(in_dim, cfg.hidden, sys.state_dim,
                       /*output_tanh=*/false, cfg.seed + 1);
  out.mse_history.push_back(full_mse(out.model, train.XU, train.Y));

  Eigen::VectorXd params = flatten(out.model);
  AdamState opt;
  opt.lr = cfg.lr;
  std::mt19937_64 eng(cfg.seed + 2);

  const Eigen::Index n = train.XU.cols();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  double best_mse = std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(
          eng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }

    double epoch_sum = 0.0;
    Eigen::MatrixXd xb, yb;
    for (Eigen::Index at = 0; at < n; at += cfg.batch) {
      const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch, n - at);
      xb.resize(in_dim, bsz);
      yb.resize(sys.state_dim, bsz);
      for (Eigen::Index j = 0; j < bsz; ++j) {
        xb.col(j) = train.XU.col(order[at + j]);
        yb.col(j) = train.Y.col(order[at + j]);
      }
      const Eigen::MatrixXd err = forward_batch(out.model, xb) - yb;
      const double loss = err.squaredNorm() / static_cast<double>(bsz);
      if (!std::isfinite(loss))
        throw std::runtime_error("learn_dynamics: non-finite loss at epoch " +
                                 std::to_string(epoch));
      epoch_sum += loss * static_cast<double>(bsz);
      const NetGrads g =
          backward(out.model, xb, (2.0 / static_cast<double>(bsz)) * err);
      adam_step(params, flatten(g), opt);
      unflatten(out.model, params);
    }

    const double mse = epoch_sum / static_cast<double>(n);
    out.mse_history.push_back(mse);
    if (mse < best_mse * (1.0 - 1e-4)) {
      best_mse = mse;
      stall = 0;
    } else if (++stall >= cfg.plateau_epochs) {
      stall = 0;
      if (opt.lr > cfg.lr_min) opt.lr = std::max(cfg.lr_min, opt.lr * 0.1);
    }
    if (mse < cfg.target_mse) break;
  }

  out.unconverged =
      cfg.max_epochs == 0 || out.mse_history.back() >= cfg.target_mse;

  // The bound needs the worst residual at the *final* weights, so alpha is a
  // single exact pass over everything we sampled, not a running statistic.
  const SampleSet eval = sample_data(sys, cfg.eval_samples, cfg.seed + 3);
  out.alpha = std::max(max_residual(out.model, train.XU, train.Y, cfg.workers),
                       max_residual(out.model, eval.XU, eval.Y, cfg.workers));
  // Either grid alone covers the product space within its own radius, and
  // alpha holds on both, so the tighter radius is the one that counts.
  out.sample_gap = std::min(train.gap, eval.gap);
  out.k_phi = lipschitz_upper(out.model);
  return out;
}

double generalization_bound(const SysIdResult& r, double k_f) {
  return k_f * r.sample_gap + r.alpha + r.k_phi * r.sample_gap;
}

}  // namespace lyap
