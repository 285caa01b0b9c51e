#include "lyap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lyap/dynamics.hpp"
#include "lyap/lqr.hpp"
#include "lyap/lyapunov.hpp"
#include "lyap/network.hpp"
#include "lyap/report.hpp"
#include "lyap/roa.hpp"
#include "lyap/sysid.hpp"

namespace lyap {

namespace {

using nlohmann::ordered_json;

void print_json(const ordered_json& j) { std::cout << j.dump(2) << "\n"; }

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

ordered_json verdict_json(const Verdict& v) {
  ordered_json j;
  switch (v.kind) {
    case VerdictKind::kUnsat: j["verdict"] = "unsat"; break;
    case VerdictKind::kDeltaSat: j["verdict"] = "delta-sat"; break;
    default: j["verdict"] = "unknown"; break;
  }
  j["leaves_proven"] = v.leaves_proven;
  j["boxes_processed"] = v.boxes_processed;
  if (v.kind == VerdictKind::kDeltaSat) {
    ordered_json center = ordered_json::array();
    for (const Interval& d : v.witness.dims)
      center.push_back(0.5 * (d.lo + d.hi));
    j["witness"] = center;
    j["violated_clause"] =
        v.violated_clause == 0 ? "positivity" : "decrease";
  }
  if (v.kind == VerdictKind::kUnknown)
    j["worklist_remaining"] = v.worklist_remaining;
  return j;
}

double attraction_dt(const ControlSystem& sys) {
  return sys.name == "pendulum" ? 2e-4 : 1e-3;
}

// Writes the certificate meta file consumed by verify/replay/roa.
std::string meta_text(const CertificateReport& r) {
  std::ostringstream meta;
  meta << "system " << r.system << "\n"
       << "eps " << format_double(r.eps) << "\n"
       << "beta " << format_double(r.beta) << "\n"
       << "precision " << format_double(r.precision) << "\n"
       << "k_f " << format_double(r.k_f) << "\n"
       << "alpha " << format_double(r.alpha) << "\n"
       << "k_phi " << format_double(r.k_phi) << "\n"
       << "sample_gap " << format_double(r.sample_gap) << "\n"
       << "m_bound " << format_double(r.m) << "\n";
  return meta.str();
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{
      "Learns a control system's dynamics, trains a neural Lyapunov "
      "function and saturating controller against the model, certifies the "
      "Lyapunov conditions with an interval falsifier, and checks the "
      "certificate against the true dynamics.",
      "lyapcert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  int rc = 0;

  // ---- learn-dynamics ----------------------------------------------------
  struct {
    std::string system;
    std::int64_t samples = 250'000;
    std::int64_t eval_samples = 1'000'000;
    int hidden = 100;
    int batch = 512;
    int epochs = 200;
    double lr = 0.01;
    std::uint64_t seed = 0;
    std::string out = "model.nnet";
  } ld;
  auto* cmd_ld = app.add_subcommand(
      "learn-dynamics", "Fit a tanh network to the plant field; writes the "
                        "net and a <out>.meta residual summary");
  cmd_ld->add_option("--system", ld.system, "benchmark name")->required();
  cmd_ld->add_option("--samples", ld.samples, "training grid size")
      ->capture_default_str();
  cmd_ld->add_option("--eval-samples", ld.eval_samples,
                     "extra grid scanned for the residual bound")
      ->capture_default_str();
  cmd_ld->add_option("--hidden", ld.hidden, "hidden units")
      ->capture_default_str();
  cmd_ld->add_option("--batch", ld.batch, "minibatch size")
      ->capture_default_str();
  cmd_ld->add_option("--epochs", ld.epochs, "epoch cap")
      ->capture_default_str();
  cmd_ld->add_option("--lr", ld.lr, "initial learning rate")
      ->capture_default_str();
  cmd_ld->add_option("--seed", ld.seed, "RNG seed")->capture_default_str();
  cmd_ld->add_option("--out", ld.out, "model file")->capture_default_str();
  cmd_ld->callback([&] {
    const ControlSystem sys = system_by_name(ld.system);
    TrainConfig tc;
    tc.n_samples = ld.samples;
    tc.eval_samples = ld.eval_samples;
    tc.hidden = ld.hidden;
    tc.batch = ld.batch;
    tc.max_epochs = ld.epochs;
    tc.lr = ld.lr;
    tc.seed = ld.seed;
    tc.workers = env_workers();
    const SysIdResult r = learn_dynamics(sys, tc);
    save_net(r.model, ld.out);
    std::ostringstream meta;
    meta << "alpha " << format_double(r.alpha) << "\n"
         << "sample_gap " << format_double(r.sample_gap) << "\n"
         << "k_phi " << format_double(r.k_phi) << "\n";
    write_text_file(ld.out + ".meta", meta.str());
    ordered_json j;
    j["system"] = ld.system;
    j["alpha"] = r.alpha;
    j["sample_gap"] = r.sample_gap;
    j["k_phi"] = r.k_phi;
    j["final_mse"] = r.mse_history.back();
    j["epochs"] = r.mse_history.size() - 1;
    j["unconverged"] = r.unconverged;
    j["model"] = ld.out;
    print_json(j);
  });

  // ---- learn-lyapunov ----------------------------------------------------
  struct {
    std::string model = "model.nnet";
    std::string system;
    double eps = 0.1;
    double beta = 0.0;
    double precision = 0.01;
    int hidden = 6;
    int max_rounds = 50;
    int epochs = 300;
    int batch = 500;
    double lr = 0.01;
    double alpha = -1.0;
    double gap = -1.0;
    double q = 1.0;
    double r = 1.0;
    std::uint64_t seed = 0;
    std::string out = "cert";
  } ll;
  auto* cmd_ll = app.add_subcommand(
      "learn-lyapunov", "Train and certify a Lyapunov function (and "
                        "controller gain) against a fitted model");
  cmd_ll->add_option("--model", ll.model, "fitted model file")
      ->capture_default_str();
  cmd_ll->add_option("--system", ll.system, "benchmark name")->required();
  cmd_ll->add_option("--eps", ll.eps, "excluded-ball radius")
      ->capture_default_str();
  cmd_ll->add_option("--beta", ll.beta, "floor on the decrease margin")
      ->capture_default_str();
  cmd_ll->add_option("--precision", ll.precision, "falsifier precision")
      ->capture_default_str();
  cmd_ll->add_option("--hidden", ll.hidden, "hidden units of V")
      ->capture_default_str();
  cmd_ll->add_option("--max-rounds", ll.max_rounds, "training-round cap")
      ->capture_default_str();
  cmd_ll->add_option("--epochs", ll.epochs, "optimizer steps per round")
      ->capture_default_str();
  cmd_ll->add_option("--batch", ll.batch, "risk batch size")
      ->capture_default_str();
  cmd_ll->add_option("--lr", ll.lr, "learning rate")->capture_default_str();
  cmd_ll->add_option("--alpha", ll.alpha,
                     "model residual bound (default: <model>.meta)");
  cmd_ll->add_option("--gap", ll.gap,
                     "sample covering radius (default: <model>.meta)");
  cmd_ll->add_option("--q", ll.q, "LQR state weight")->capture_default_str();
  cmd_ll->add_option("--r", ll.r, "LQR input weight")->capture_default_str();
  cmd_ll->add_option("--seed", ll.seed, "RNG seed")->capture_default_str();
  cmd_ll->add_option("--out", ll.out, "certificate directory")
      ->capture_default_str();
  cmd_ll->callback([&] {
    const ControlSystem sys = system_by_name(ll.system);
    SysIdResult sid;
    sid.model = load_net(ll.model);
    sid.k_phi = lipschitz_upper(sid.model);
    sid.alpha = ll.alpha;
    sid.sample_gap = ll.gap;
    if (sid.alpha < 0 || sid.sample_gap < 0) {
      std::map<std::string, std::string> meta;
      try {
        meta = parse_key_values(read_text_file(ll.model + ".meta"));
      } catch (const std::exception&) {
        throw std::runtime_error(
            "no residual data: pass --alpha and --gap or keep the .meta "
            "file written by learn-dynamics next to the model");
      }
      if (sid.alpha < 0) sid.alpha = std::stod(meta.at("alpha"));
      if (sid.sample_gap < 0) sid.sample_gap = std::stod(meta.at("sample_gap"));
      if (meta.count("k_phi")) sid.k_phi = std::stod(meta.at("k_phi"));
    }
    const Linearization lin = linearize(sys);
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    const LqrSolution sol = solve_care(
        lin, ll.q * Eigen::MatrixXd::Identity(n, n),
        m > 0 ? (ll.r * Eigen::MatrixXd::Identity(m, m))
              : Eigen::MatrixXd(0, 0));
    LearnLyapConfig lc;
    lc.hidden = ll.hidden;
    lc.epochs_per_round = ll.epochs;
    lc.max_rounds = ll.max_rounds;
    lc.lr = ll.lr;
    lc.eps = ll.eps;
    lc.precision = ll.precision;
    lc.risk.batch = ll.batch;
    lc.risk.beta = ll.beta;
    lc.seed = ll.seed;
    lc.workers = env_workers();
    const LyapResult ly =
        learn_lyapunov(sid, sys, lqr_initial_gain(sys, sol), lc);

    CertificateReport rep;
    rep.system = ll.system;
    rep.k_f = sys.jacobian_bound;
    rep.k_phi = sid.k_phi;
    rep.sample_gap = sid.sample_gap;
    rep.alpha = sid.alpha;
    rep.m = ly.M;
    rep.beta = ly.beta;
    rep.eps = ll.eps;
    rep.precision = ll.precision;
    rep.chain_ok = ly.beta > ly.M * ((rep.k_f + rep.k_phi) * rep.sample_gap +
                                     rep.alpha);
    rep.learned_verdict =
        ly.certified ? "unsat"
                     : (ll.max_rounds == 0 ? "skipped" : "not-certified");
    rep.certified = ly.certified;
    rep.rounds = ly.rounds;

    std::filesystem::create_directories(ll.out);
    std::vector<std::string> files = {"V.nnet", "model.nnet", "meta",
                                      "report.json", "manifest"};
    save_net(ly.V, ll.out + "/V.nnet");
    save_net(sid.model, ll.out + "/model.nnet");
    if (ly.controller) {
      save_controller(*ly.controller, ll.out + "/controller.txt");
      files.push_back("controller.txt");
    }
    write_text_file(ll.out + "/meta", meta_text(rep));
    write_text_file(ll.out + "/report.json", rep.to_json());
    std::sort(files.begin(), files.end());
    std::string manifest;
    for (const std::string& f : files) manifest += f + "\n";
    write_text_file(ll.out + "/manifest", manifest);
    std::cout << rep.to_json();
    rc = ly.certified ? 0 : 2;
  });

  // ---- verify / replay ---------------------------------------------------
  struct ReplayArgs {
    std::string cert;
    std::string system;
    std::string against;
    double eps = -1.0;
    double beta = std::numeric_limits<double>::quiet_NaN();
    double precision = 0.0;
  } vr_verify, vr_replay;
  const auto add_replay_cmd = [&](const char* name, const char* help,
                                  const char* default_against,
                                  ReplayArgs& vr) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--cert", vr.cert, "certificate directory")->required();
    cmd->add_option("--system", vr.system, "benchmark name")->required();
    vr.against = default_against;
    cmd->add_option("--against", vr.against,
                    "field to falsify: learned | true")
        ->check(CLI::IsMember({"learned", "true"}))
        ->capture_default_str();
    cmd->add_option("--eps", vr.eps,
                    "excluded-ball radius (default: stored)");
    cmd->add_option("--beta", vr.beta, "decrease margin (default: stored "
                                       "against learned, 0 against true)");
    cmd->add_option("--precision", vr.precision,
                    "falsifier precision (default: stored)");
    cmd->callback([&] {
      ReplayOptions ro;
      ro.precision = vr.precision;
      ro.eps = vr.eps;
      ro.beta = vr.beta;
      ro.workers = env_workers();
      const ReplayOutcome oc = replay(vr.cert, vr.system, vr.against, ro);
      ordered_json j = verdict_json(oc.verdict);
      j["against"] = vr.against;
      j["beta_checked"] = oc.beta_checked;
      j["wall_time"] = oc.report.timings.back().second;
      j["report"] = ordered_json::parse(oc.report.to_json());
      print_json(j);
      rc = oc.verdict.kind == VerdictKind::kUnsat ? 0 : 2;
    });
    return cmd;
  };
  add_replay_cmd("verify",
                 "Falsify a stored certificate's Lyapunov conditions",
                 "learned", vr_verify);
  add_replay_cmd("replay",
                 "Re-check a stored certificate against the true dynamics",
                 "true", vr_replay);

  // ---- lqr ---------------------------------------------------------------
  struct {
    std::string system;
    double q = 1.0;
    double r = 1.0;
    std::string csv;
  } lq;
  auto* cmd_lqr = app.add_subcommand(
      "lqr", "Solve the Riccati equation at the linearization and sample "
             "the comparison ellipse");
  cmd_lqr->add_option("--system", lq.system, "benchmark name")->required();
  cmd_lqr->add_option("--q", lq.q, "state weight")->capture_default_str();
  cmd_lqr->add_option("--r", lq.r, "input weight")->capture_default_str();
  cmd_lqr->add_option("--csv", lq.csv, "write the ellipse rim here");
  cmd_lqr->callback([&] {
    const ControlSystem sys = system_by_name(lq.system);
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    const Linearization lin = linearize(sys);
    const LqrSolution sol = solve_care(
        lin, lq.q * Eigen::MatrixXd::Identity(n, n),
        m > 0 ? (lq.r * Eigen::MatrixXd::Identity(m, m))
              : Eigen::MatrixXd(0, 0));
    const LqrRoa ellipse = lqr_roa(sol, sys);
    const Eigen::MatrixXd acl = lin.A - lin.B * sol.K;
    const Eigen::EigenSolver<Eigen::MatrixXd> eio(acl);
    ordered_json j;
    j["system"] = lq.system;
    j["K"] = matrix_json(sol.K);
    j["P"] = matrix_json(sol.P);
    ordered_json eigs = ordered_json::array();
    for (int i = 0; i < n; ++i)
      eigs.push_back(ordered_json{{"re", eio.eigenvalues()(i).real()},
                                  {"im", eio.eigenvalues()(i).imag()}});
    j["closed_loop_eigenvalues"] = eigs;
    j["c_star"] = ellipse.c_star;
    j["area"] = ellipse.area;
    j["angle_capped"] = ellipse.angle_capped;
    if (!lq.csv.empty()) {
      std::string out;
      for (int i = 0; i < n; ++i)
        out += (i ? ",x" : "x") + std::to_string(i + 1);
      out += "\n";
      for (const Eigen::VectorXd& p : ellipse.rim) {
        for (int i = 0; i < n; ++i)
          out += (i ? "," : "") + format_double(p(i));
        out += "\n";
      }
      write_text_file(lq.csv, out);
      j["csv"] = lq.csv;
    }
    print_json(j);
  });

  // ---- roa ---------------------------------------------------------------
  struct {
    std::string cert;
    std::string system;
    int grid = 0;
    int probes = 1000;
    std::int64_t points = 1'000'000;
    std::uint64_t seed = 0;
    std::string out;
  } ro;
  auto* cmd_roa = app.add_subcommand(
      "roa", "Extract the largest certified sublevel set and probe it with "
             "true-dynamics rollouts");
  cmd_roa->add_option("--cert", ro.cert, "certificate directory")->required();
  cmd_roa->add_option("--system", ro.system, "benchmark name")->required();
  cmd_roa->add_option("--grid", ro.grid,
                      "V / Lie-derivative grid resolution (0: skip)")
      ->capture_default_str();
  cmd_roa->add_option("--probes", ro.probes, "rollout count (0: skip)")
      ->capture_default_str();
  cmd_roa->add_option("--points", ro.points, "Monte-Carlo area samples")
      ->capture_default_str();
  cmd_roa->add_option("--seed", ro.seed, "RNG seed")->capture_default_str();
  cmd_roa->add_option("--out", ro.out,
                      "output directory (default: the certificate's)");
  cmd_roa->callback([&] {
    const ControlSystem sys = system_by_name(ro.system);
    const OneHiddenNet V = load_net(ro.cert + "/V.nnet");
    const auto meta = parse_key_values(read_text_file(ro.cert + "/meta"));
    if (meta.count("system") && meta.at("system") != ro.system)
      throw std::invalid_argument("certificate is for system '" +
                                  meta.at("system") + "', not '" + ro.system +
                                  "'");
    const ClosedLoopSystem loop =
        sys.input_dim > 0
            ? close_loop(sys, load_controller(ro.cert + "/controller.txt"))
            : autonomous(sys);
    LevelSetOptions lo;
    lo.eps = meta.count("eps") ? std::stod(meta.at("eps")) : 0.1;
    lo.precision =
        meta.count("precision") ? std::stod(meta.at("precision")) : 0.01;
    lo.area_points = ro.points;
    lo.seed = ro.seed;
    lo.workers = env_workers();
    const LevelSetResult level = largest_level(V, sys, lo);
    ordered_json j;
    j["system"] = ro.system;
    j["containment"] = level.containment;
    j["c_star"] = level.c_star;
    j["area"] = level.area;
    j["area_stderr"] = level.area_stderr;
    j["c1"] = level.c1;
    j["c2"] = level.c2;
    j["sandwich"] = level.sandwich;
    if (ro.probes > 0 && level.containment) {
      AttractionOptions ao;
      ao.dt = attraction_dt(sys);
      ao.workers = env_workers();
      const AttractionResult att =
          empirical_attraction(loop, level, V, ro.probes, ro.seed, ao);
      j["attraction"] = ordered_json{{"fraction", att.fraction},
                                     {"probes", att.n_probes},
                                     {"failures", att.failures},
                                     {"max_v_step", att.max_v_step}};
    }
    if (ro.grid > 0) {
      const std::string dir = ro.out.empty() ? ro.cert : ro.out;
      std::filesystem::create_directories(dir);
      export_grid_file(V, loop, ro.grid, dir + "/grid.csv");
      j["grid_csv"] = dir + "/grid.csv";
    }
    print_json(j);
  });

  // ---- run ---------------------------------------------------------------
  struct {
    std::string config;
    std::string system;
    std::string out;
    std::uint64_t seed = 0;
  } rn;
  auto* cmd_run = app.add_subcommand(
      "run", "Full pipeline: fit dynamics, train and certify the Lyapunov "
             "pair, replay against the true field, extract the level set");
  cmd_run->add_option("--config", rn.config, "keyed config file");
  auto* rn_system =
      cmd_run->add_option("--system", rn.system, "override the system");
  auto* rn_out = cmd_run->add_option("--out", rn.out,
                                     "override the output directory");
  auto* rn_seed = cmd_run->add_option("--seed", rn.seed, "override the seed");
  cmd_run->callback([&] {
    PipelineConfig cfg;
    if (!rn.config.empty()) cfg = load_config(rn.config);
    if (rn_system->count() > 0) cfg.system = rn.system;
    if (rn_out->count() > 0) cfg.out = rn.out;
    if (rn_seed->count() > 0) cfg.seed = rn.seed;
    const CertificateReport rep = run_pipeline(cfg);
    std::cout << rep.to_json();
    rc = rep.certified ? 0 : 2;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

}  // namespace lyap
