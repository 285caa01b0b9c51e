#include "lyap/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "lyap/lqr.hpp"

namespace lyap {

namespace {

double uniform(std::mt19937_64& eng, double lo, double hi) {
  const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

// Forward pass of a one-output net with everything the risk needs cached:
// h hidden activations, d = w2 .* (1 - h^2), plus the output slope p = dV/ds
// and curvature pp = d2V/ds2 of the optional output squash.
struct VFwd {
  Eigen::VectorXd h, d;
  double V = 0.0, p = 1.0, pp = 0.0;
};

VFwd v_forward(const OneHiddenNet& net, const Eigen::VectorXd& x) {
  VFwd o;
  o.h = (net.W1 * x + net.B1).array().tanh();
  const double s = net.W2.row(0).dot(o.h) + net.B2(0);
  if (net.output_tanh) {
    o.V = std::tanh(s);
    o.p = 1.0 - o.V * o.V;
    o.pp = -2.0 * o.V * o.p;
  } else {
    o.V = s;
  }
  o.d = (net.W2.row(0).transpose().array() * (1.0 - o.h.array().square()))
            .matrix();
  return o;
}

Eigen::VectorXd v_gradient(const OneHiddenNet& net, const VFwd& o) {
  return o.p * (net.W1.transpose() * o.d);
}

double spectral_abscissa(const Eigen::MatrixXd& m) {
  return Eigen::EigenSolver<Eigen::MatrixXd>(m)
      .eigenvalues()
      .real()
      .maxCoeff();
}

}  // namespace

double lie_derivative(
    const OneHiddenNet& V,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& dyn,
    const Eigen::VectorXd& x) {
  if (V.out_dim() != 1)
    throw std::invalid_argument("lie_derivative: V must have one output");
  if (x.size() != V.in_dim())
    throw std::invalid_argument("lie_derivative: state dim mismatch");
  const Eigen::VectorXd f = dyn(x);
  if (f.size() != x.size())
    throw std::invalid_argument("lie_derivative: field dim mismatch");
  return gradient_x(V, x).row(0).dot(f);
}

ExprPtr lie_expr(const OneHiddenNet& V, const std::vector<ExprPtr>& field) {
  if (V.out_dim() != 1)
    throw std::invalid_argument("lie_expr: V must have one output");
  if (static_cast<int>(field.size()) != V.in_dim())
    throw std::invalid_argument("lie_expr: field dim mismatch");
  std::vector<ExprPtr> xs;
  xs.reserve(field.size());
  for (size_t i = 0; i < field.size(); ++i) xs.push_back(var(static_cast<int>(i)));
  const ExprPtr Vx = net_expr(V, xs)[0];
  ExprPtr acc;
  for (size_t i = 0; i < field.size(); ++i) {
    const ExprPtr term = mul(diff(Vx, static_cast<int>(i)), field[i]);
    acc = acc ? add(acc, term) : term;
  }
  return acc;
}

RiskValue lyapunov_risk(const OneHiddenNet& V, const SaturatingController* ctrl,
                        const OneHiddenNet& phi, const Eigen::MatrixXd& batch,
                        const LyapRiskConfig& cfg) {
  const int n = V.in_dim();
  const int hid = V.hidden_dim();
  const int m = ctrl ? static_cast<int>(ctrl->C.rows()) : 0;
  if (V.out_dim() != 1)
    throw std::invalid_argument("lyapunov_risk: V must have one output");
  if (batch.rows() != n || batch.cols() < 1)
    throw std::invalid_argument("lyapunov_risk: batch shape mismatch");
  if (phi.in_dim() != n + m || phi.out_dim() != n)
    throw std::invalid_argument("lyapunov_risk: model dims mismatch");
  if (ctrl && (ctrl->k.rows() != m || ctrl->k.cols() != n))
    throw std::invalid_argument("lyapunov_risk: controller dims mismatch");
  if (cfg.C1 < 0 || cfg.C2 < 0 || cfg.C3 < 0 || cfg.C4 < 0 || cfg.a < 0)
    throw std::invalid_argument("lyapunov_risk: negative weight");

  const Eigen::Index cols = batch.cols();
  const double inv_n = 1.0 / static_cast<double>(cols);

  NetGrads gr;
  gr.W1 = Eigen::MatrixXd::Zero(hid, n);
  gr.B1 = Eigen::VectorXd::Zero(hid);
  gr.W2 = Eigen::MatrixXd::Zero(1, hid);
  gr.B2 = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(m, n);

  // scale * dV/dtheta at a cached forward pass.
  auto add_v_grad = [&](const VFwd& o, const Eigen::VectorXd& x, double scale) {
    gr.W2.row(0) += scale * o.p * o.h.transpose();
    gr.B2(0) += scale * o.p;
    const Eigen::VectorXd dz = o.p * o.d;
    gr.B1 += scale * dz;
    gr.W1 += scale * dz * x.transpose();
  };
  // scale * d(grad_x V . f)/dtheta with the direction f held constant.
  auto add_lie_grad = [&](const VFwd& o, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& f, double scale) {
    const Eigen::VectorXd c = V.W1 * f;
    const double A = o.d.dot(c);
    gr.W2.row(0) +=
        scale * (o.p * (1.0 - o.h.array().square()) * c.array() +
                 o.pp * A * o.h.array())
                    .matrix()
                    .transpose();
    gr.B2(0) += scale * o.pp * A;
    const Eigen::VectorXd dz =
        (-2.0 * o.p) * (o.h.array() * o.d.array() * c.array()).matrix() +
        (o.pp * A) * o.d;
    gr.B1 += scale * dz;
    gr.W1 += scale * (dz * x.transpose() + o.p * o.d * f.transpose());
  };

  double risk = 0.0;
  double best_gn = -1.0;
  Eigen::Index best_i = 0;

  for (Eigen::Index i = 0; i < cols; ++i) {
    const Eigen::VectorXd x = batch.col(i);
    const VFwd o = v_forward(V, x);

    if (cfg.C1 > 0 && o.V < 0.0) {
      risk += cfg.C1 * (-o.V) * inv_n;
      add_v_grad(o, x, -cfg.C1 * inv_n);
    }
    if (cfg.roa_term) {
      risk += (x.norm() - cfg.a * o.V) * inv_n;
      add_v_grad(o, x, -cfg.a * inv_n);
    }

    const Eigen::VectorXd g = v_gradient(V, o);
    const double gn = g.norm();
    if (gn > best_gn) {
      best_gn = gn;
      best_i = i;
    }

    if (cfg.C2 > 0) {
      Eigen::VectorXd xin(n + m);
      xin.head(n) = x;
      Eigen::ArrayXd w;
      if (ctrl) {
        w = (ctrl->k * x + ctrl->b).array().tanh();
        xin.tail(m) = ctrl->C * w.matrix();
      }
      const Eigen::VectorXd f = forward(phi, xin);
      const double lie = g.dot(f);
      if (cfg.beta + lie > 0.0) {
        risk += cfg.C2 * (cfg.beta + lie) * inv_n;
        add_lie_grad(o, x, f, cfg.C2 * inv_n);
        if (ctrl && m > 0) {
          const Eigen::MatrixXd J = gradient_x(phi, xin);
          const Eigen::VectorXd du = J.rightCols(m).transpose() * g;
          for (int c = 0; c < m; ++c)
            dk.row(c) += (cfg.C2 * inv_n * du(c) * ctrl->C(c, c) *
                          (1.0 - w(c) * w(c))) *
                         x.transpose();
        }
      }
    }
  }

  if (cfg.C3 > 0) {
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    const VFwd o0 = v_forward(V, x0);
    risk += cfg.C3 * o0.V * o0.V;
    add_v_grad(o0, x0, 2.0 * cfg.C3 * o0.V);
  }
  if (cfg.C4 > 0 && best_gn > 0.0) {
    const Eigen::VectorXd x = batch.col(best_i);
    const VFwd o = v_forward(V, x);
    const Eigen::VectorXd g = v_gradient(V, o);
    risk += cfg.C4 * best_gn;
    add_lie_grad(o, x, g / best_gn, cfg.C4);
  }

  RiskValue rv;
  rv.risk = risk;
  rv.d_theta = flatten(gr);
  rv.d_gain = dk;
  if (!std::isfinite(risk) || !rv.d_theta.allFinite() || !dk.allFinite())
    throw std::runtime_error("lyapunov_risk: non-finite risk or gradient");
  return rv;
}

GradNormBound gradient_norm_bound(const OneHiddenNet& V, const Region& region,
                                  const FalsifyOptions& opt) {
  if (V.out_dim() != 1)
    throw std::invalid_argument("gradient_norm_bound: V must have one output");
  if (static_cast<int>(region.domain.size()) != V.in_dim())
    throw std::invalid_argument("gradient_norm_bound: region dim mismatch");

  GradNormBound out;
  const double global = lipschitz_upper(V);
  if (global == 0.0) return out;  // flat function, any positive level holds

  std::vector<ExprPtr> xs;
  for (int i = 0; i < V.in_dim(); ++i) xs.push_back(var(i));
  const ExprPtr Vx = net_expr(V, xs)[0];
  ExprPtr gsq;
  for (int i = 0; i < V.in_dim(); ++i) {
    const ExprPtr term = sqr(diff(Vx, i));
    gsq = gsq ? add(gsq, term) : term;
  }

  // "||g|| < level everywhere" as a falsification query: the positivity
  // clause carries level^2 - ||g||^2 and the decrease clause is vacuous.
  auto query = [&](double level) {
    VerifyProblem p;
    p.region = region;
    p.region.inner_radius = 0.0;  // the bound covers the whole region
    p.V = sub(cst(level * level), gsq);
    p.lie = cst(-1.0);
    p.beta = 0.0;
    return falsify(p, opt);
  };

  double lo = 0.0;
  double hi = global;
  bool budget_hit = false;
  while (hi - lo > 0.05 * hi) {
    const double mid = 0.5 * (lo + hi);
    const Verdict v = query(mid);
    if (v.kind == VerdictKind::kUnsat) {
      hi = mid;
    } else if (v.kind == VerdictKind::kDeltaSat) {
      lo = mid;
    } else {
      budget_hit = true;
      break;
    }
  }
  out.M = hi;
  out.loose = budget_hit;
  return out;
}

LyapResult learn_lyapunov(const SysIdResult& sid, const ControlSystem& sys,
                          const Eigen::MatrixXd& k_init,
                          const LearnLyapConfig& cfg) {
  const int n = sys.state_dim;
  const int m = sys.input_dim;
  if (sid.model.in_dim() != n + m || sid.model.out_dim() != n)
    throw std::invalid_argument("learn_lyapunov: model does not match plant");
  if (cfg.max_rounds < 0 || cfg.epochs_per_round < 1 || cfg.risk.batch < 1 ||
      cfg.hidden < 1 || !(cfg.lr > 0.0) || !(cfg.eps >= 0.0) ||
      !(cfg.precision > 0.0) || !(cfg.beta_train_slack > 1.0) ||
      !(cfg.beta_cert_slack > 1.0) || cfg.screen_points < 0)
    throw std::invalid_argument("learn_lyapunov: bad config");

  LyapResult out;
  if (m > 0) {
    if (k_init.rows() != m || k_init.cols() != n)
      throw std::invalid_argument("learn_lyapunov: gain shape mismatch");
    SaturatingController ctrl;
    ctrl.C = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      const Interval& ib = sys.input_box.dims[i];
      const double sat = std::max(std::abs(ib.lo), std::abs(ib.hi));
      if (!(sat > 0.0))
        throw std::invalid_argument("learn_lyapunov: empty input range");
      ctrl.C(i, i) = sat;
    }
    ctrl.k = k_init;
    ctrl.b = solve_saturating_bias(ctrl.C, sys.equilibrium_shift);
    out.controller = ctrl;
  } else if (k_init.size() != 0) {
    throw std::invalid_argument(
        "learn_lyapunov: gain given for an autonomous plant");
  }

  // The loop must at least stabilize the true linearization before the
  // nonlinear training is worth attempting.
  const Linearization lin = linearize(sys);
  Eigen::MatrixXd acl = lin.A;
  if (out.controller) {
    const SaturatingController& c = *out.controller;
    const Eigen::ArrayXd wb = c.b.array().tanh();
    acl += lin.B * (c.C * (1.0 - wb.square()).matrix().asDiagonal() * c.k);
  }
  const double abscissa = spectral_abscissa(acl);
  if (!(abscissa < 0.0))
    throw std::invalid_argument(
        "learn_lyapunov: initial gain does not stabilize the linearization "
        "(spectral abscissa " +
        std::to_string(abscissa) + ")");

  out.V = make_net(n, cfg.hidden, 1, /*output_tanh=*/true, cfg.seed);

  const Eigen::Index nv = flatten(out.V).size();
  const Eigen::Index nk = static_cast<Eigen::Index>(m) * n;
  Eigen::VectorXd params(nv + nk);
  params.head(nv) = flatten(out.V);
  for (int c = 0; c < m; ++c)
    for (int p = 0; p < n; ++p) params(nv + c * n + p) = k_init(c, p);
  AdamState opt;
  opt.lr = cfg.lr;

  std::mt19937_64 eng(cfg.seed + 1);
  auto draw_state = [&](double min_norm) {
    Eigen::VectorXd x(n);
    for (;;) {
      for (int d = 0; d < n; ++d)
        x(d) = uniform(eng, sys.domain.dims[d].lo, sys.domain.dims[d].hi);
      const double nn = x.norm();
      if (nn < min_norm) continue;
      if (sys.domain_radius > 0.0 && nn > sys.domain_radius) continue;
      return x;
    }
  };

  const double err_bound = generalization_bound(sid, sys.jacobian_bound);
  const Region region{sys.domain, cfg.eps, sys.domain_radius};
  FalsifyOptions fopt;
  fopt.precision = cfg.precision;
  fopt.max_boxes = cfg.falsify_max_boxes;
  fopt.workers = cfg.workers;

  const SaturatingController* ctrl_ptr =
      out.controller ? &*out.controller : nullptr;

  for (int round = 0; round < cfg.max_rounds; ++round) {
    out.rounds = round + 1;

    Eigen::MatrixXd batch(
        n, cfg.risk.batch + static_cast<Eigen::Index>(out.counterexamples.size()));
    for (int j = 0; j < cfg.risk.batch; ++j) batch.col(j) = draw_state(0.0);
    for (size_t j = 0; j < out.counterexamples.size(); ++j)
      batch.col(cfg.risk.batch + static_cast<Eigen::Index>(j)) =
          out.counterexamples[j];
    if (cfg.inspect_batch) cfg.inspect_batch(round, batch);

    // Surrogate for M: the largest sampled gradient norm. The margin the
    // hinge trains toward sits beta_train_slack above the induced floor.
    // cfg.risk.beta acts as a fixed lower bound: without one, a nearly
    // constant V with vanishing gradients drives every term (and the
    // auto-scaled margin itself) to zero without ever being certifiable.
    double m_sur = 0.0;
    for (Eigen::Index j = 0; j < batch.cols(); ++j)
      m_sur = std::max(m_sur, gradient_x(out.V, batch.col(j)).row(0).norm());
    LyapRiskConfig rc = cfg.risk;
    rc.beta =
        std::max(cfg.risk.beta, cfg.beta_train_slack * m_sur * err_bound);

    for (int e = 0; e < cfg.epochs_per_round; ++e) {
      const RiskValue rv =
          lyapunov_risk(out.V, ctrl_ptr, sid.model, batch, rc);
      out.risk_history.push_back(rv.risk);
      Eigen::VectorXd grad(nv + nk);
      grad.head(nv) = rv.d_theta;
      for (int c = 0; c < m; ++c)
        for (int p = 0; p < n; ++p) grad(nv + c * n + p) = rv.d_gain(c, p);
      adam_step(params, grad, opt);
      unflatten(out.V, params.head(nv));
      if (out.controller)
        for (int c = 0; c < m; ++c)
          for (int p = 0; p < n; ++p)
            out.controller->k(c, p) = params(nv + c * n + p);
    }

    // Cheap sampled screen: skip the falsifier while obvious violations
    // remain, injecting the worst one as a counterexample.
    double m_screen = 0.0;
    std::vector<Eigen::VectorXd> screen;
    screen.reserve(cfg.screen_points);
    for (int j = 0; j < cfg.screen_points; ++j) {
      screen.push_back(draw_state(cfg.eps));
      m_screen = std::max(
          m_screen, gradient_x(out.V, screen.back()).row(0).norm());
    }
    const double beta_screen = cfg.beta_cert_slack * m_screen * err_bound;
    double worst = 0.0;
    Eigen::VectorXd worst_x;
    for (const Eigen::VectorXd& x : screen) {
      const VFwd o = v_forward(out.V, x);
      Eigen::VectorXd xin(n + m);
      xin.head(n) = x;
      if (out.controller) xin.tail(m) = control(*out.controller, x);
      const double lie = v_gradient(out.V, o).dot(forward(sid.model, xin));
      const double viol = std::max(-o.V, lie + beta_screen);
      if (viol > worst) {
        worst = viol;
        worst_x = x;
      }
    }
    if (worst > 0.0) {
      out.counterexamples.push_back(worst_x);
      continue;
    }

    // Formal attempt: certify M, derive the margin, falsify the conditions.
    const GradNormBound mb = gradient_norm_bound(out.V, region, fopt);
    const double beta_cert = cfg.beta_cert_slack * mb.M * err_bound;

    std::vector<ExprPtr> xs;
    for (int i = 0; i < n; ++i) xs.push_back(var(i));
    std::vector<ExprPtr> ins = xs;
    if (out.controller) {
      const std::vector<ExprPtr> us = controller_expr(*out.controller, xs);
      ins.insert(ins.end(), us.begin(), us.end());
    }
    const std::vector<ExprPtr> field = net_expr(sid.model, ins);

    VerifyProblem prob;
    prob.region = region;
    prob.V = net_expr(out.V, xs)[0];
    prob.lie = lie_expr(out.V, field);
    prob.beta = beta_cert;
    const Verdict verdict = falsify(prob, fopt);

    out.beta = beta_cert;
    out.M = mb.M;
    out.m_loose = mb.loose;
    if (verdict.kind == VerdictKind::kUnsat) {
      out.certified = true;
      return out;
    }
    if (verdict.kind == VerdictKind::kDeltaSat) {
      const std::vector<double> c = verdict.witness.center();
      out.counterexamples.push_back(
          Eigen::Map<const Eigen::VectorXd>(c.data(), n));
    }
    // Unknown: budget ran out; train further on a fresh batch.
  }
  return out;
}

}  // namespace lyap
