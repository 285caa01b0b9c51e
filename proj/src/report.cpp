#include "lyap/report.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lyap/dynamics.hpp"
#include "lyap/lqr.hpp"
#include "lyap/lyapunov.hpp"
#include "lyap/roa.hpp"
#include "lyap/sysid.hpp"

namespace lyap {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    throw std::invalid_argument("config: bad number for '" + key + "'");
  return x;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  const std::int64_t i = static_cast<std::int64_t>(x);
  if (static_cast<double>(i) != x)
    throw std::invalid_argument("config: '" + key + "' must be an integer");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "0" || v == "false") return false;
  if (v == "1" || v == "true") return true;
  throw std::invalid_argument("config: '" + key + "' must be a boolean");
}

const char* verdict_name(VerdictKind k) {
  switch (k) {
    case VerdictKind::kUnsat: return "unsat";
    case VerdictKind::kDeltaSat: return "delta-sat";
    default: return "unknown";
  }
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos)
      throw std::invalid_argument("bad key-value line: " + line);
    out[trim(line.substr(0, sp))] = trim(line.substr(sp + 1));
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected 'key = value': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "system") cfg.system = val;
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, val));
    else if (key == "out") cfg.out = val;
    else if (key == "dyn_hidden") cfg.dyn_hidden = static_cast<int>(to_int(key, val));
    else if (key == "dyn_train_samples") cfg.dyn_train_samples = to_int(key, val);
    else if (key == "dyn_eval_samples") cfg.dyn_eval_samples = to_int(key, val);
    else if (key == "dyn_batch") cfg.dyn_batch = static_cast<int>(to_int(key, val));
    else if (key == "dyn_max_epochs") cfg.dyn_max_epochs = static_cast<int>(to_int(key, val));
    else if (key == "dyn_lr") cfg.dyn_lr = to_double(key, val);
    else if (key == "dyn_lr_min") cfg.dyn_lr_min = to_double(key, val);
    else if (key == "dyn_plateau_epochs") cfg.dyn_plateau_epochs = static_cast<int>(to_int(key, val));
    else if (key == "dyn_target_mse") cfg.dyn_target_mse = to_double(key, val);
    else if (key == "lyap_hidden") cfg.lyap_hidden = static_cast<int>(to_int(key, val));
    else if (key == "lyap_c1") cfg.lyap_c1 = to_double(key, val);
    else if (key == "lyap_c2") cfg.lyap_c2 = to_double(key, val);
    else if (key == "lyap_c3") cfg.lyap_c3 = to_double(key, val);
    else if (key == "lyap_c4") cfg.lyap_c4 = to_double(key, val);
    else if (key == "lyap_roa_term") cfg.lyap_roa_term = to_bool(key, val);
    else if (key == "lyap_roa_a") cfg.lyap_roa_a = to_double(key, val);
    else if (key == "lyap_batch") cfg.lyap_batch = static_cast<int>(to_int(key, val));
    else if (key == "lyap_max_rounds") cfg.lyap_max_rounds = static_cast<int>(to_int(key, val));
    else if (key == "lyap_epochs_per_round") cfg.lyap_epochs_per_round = static_cast<int>(to_int(key, val));
    else if (key == "lyap_lr") cfg.lyap_lr = to_double(key, val);
    else if (key == "precision") cfg.precision = to_double(key, val);
    else if (key == "eps") cfg.eps = to_double(key, val);
    else if (key == "beta") cfg.beta = to_double(key, val);
    else if (key == "lqr_q") cfg.lqr_q = to_double(key, val);
    else if (key == "lqr_r") cfg.lqr_r = to_double(key, val);
    else if (key == "roa_area_points") cfg.roa_area_points = to_int(key, val);
    else if (key == "roa_probes") cfg.roa_probes = static_cast<int>(to_int(key, val));
    else if (key == "roa_grid") cfg.roa_grid = static_cast<int>(to_int(key, val));
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path));
}

std::string serialize_config(const PipelineConfig& c) {
  std::ostringstream o;
  o << "system = " << c.system << "\n";
  o << "seed = " << c.seed << "\n";
  o << "out = " << c.out << "\n";
  o << "dyn_hidden = " << c.dyn_hidden << "\n";
  o << "dyn_train_samples = " << c.dyn_train_samples << "\n";
  o << "dyn_eval_samples = " << c.dyn_eval_samples << "\n";
  o << "dyn_batch = " << c.dyn_batch << "\n";
  o << "dyn_max_epochs = " << c.dyn_max_epochs << "\n";
  o << "dyn_lr = " << format_double(c.dyn_lr) << "\n";
  o << "dyn_lr_min = " << format_double(c.dyn_lr_min) << "\n";
  o << "dyn_plateau_epochs = " << c.dyn_plateau_epochs << "\n";
  o << "dyn_target_mse = " << format_double(c.dyn_target_mse) << "\n";
  o << "lyap_hidden = " << c.lyap_hidden << "\n";
  o << "lyap_c1 = " << format_double(c.lyap_c1) << "\n";
  o << "lyap_c2 = " << format_double(c.lyap_c2) << "\n";
  o << "lyap_c3 = " << format_double(c.lyap_c3) << "\n";
  o << "lyap_c4 = " << format_double(c.lyap_c4) << "\n";
  o << "lyap_roa_term = " << (c.lyap_roa_term ? 1 : 0) << "\n";
  o << "lyap_roa_a = " << format_double(c.lyap_roa_a) << "\n";
  o << "lyap_batch = " << c.lyap_batch << "\n";
  o << "lyap_max_rounds = " << c.lyap_max_rounds << "\n";
  o << "lyap_epochs_per_round = " << c.lyap_epochs_per_round << "\n";
  o << "lyap_lr = " << format_double(c.lyap_lr) << "\n";
  o << "precision = " << format_double(c.precision) << "\n";
  o << "eps = " << format_double(c.eps) << "\n";
  o << "beta = " << format_double(c.beta) << "\n";
  o << "lqr_q = " << format_double(c.lqr_q) << "\n";
  o << "lqr_r = " << format_double(c.lqr_r) << "\n";
  o << "roa_area_points = " << c.roa_area_points << "\n";
  o << "roa_probes = " << c.roa_probes << "\n";
  o << "roa_grid = " << c.roa_grid << "\n";
  return o.str();
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

int env_workers() {
  const char* v = std::getenv("LYAPCERT_WORKERS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

Eigen::MatrixXd lqr_initial_gain(const ControlSystem& sys,
                                 const LqrSolution& sol) {
  const int m = sys.input_dim;
  if (m == 0) return Eigen::MatrixXd(0, sys.state_dim);
  // Mirror the trainer's construction: channel caps from the input box,
  // bias solved so the saturation emits the equilibrium feedforward.
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    const Interval& ib = sys.input_box.dims[i];
    C(i, i) = std::max(std::abs(ib.lo), std::abs(ib.hi));
  }
  const Eigen::VectorXd b = solve_saturating_bias(C, sys.equilibrium_shift);
  Eigen::MatrixXd k(m, sys.state_dim);
  for (int c = 0; c < m; ++c) {
    const double th = std::tanh(b(c));
    k.row(c) = -sol.K.row(c) / (C(c, c) * (1.0 - th * th));
  }
  return k;
}

std::string CertificateReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = schema;
  j["version"] = version;
  j["system"] = system;
  j["config_hash"] = config_hash;
  j["config"] = config_text;
  j["dynamics"] = nlohmann::ordered_json{{"k_f", k_f},
                                         {"k_phi", k_phi},
                                         {"sample_gap", sample_gap},
                                         {"alpha", alpha}};
  j["certificate"] = nlohmann::ordered_json{{"m", m},
                                            {"beta", beta},
                                            {"eps", eps},
                                            {"precision", precision},
                                            {"chain_ok", chain_ok}};
  j["verdicts"] = nlohmann::ordered_json{{"learned", learned_verdict},
                                         {"true", true_verdict},
                                         {"certified", certified},
                                         {"rounds", rounds}};
  j["roa"] = nlohmann::ordered_json{{"containment", containment},
                                    {"c_star", c_star},
                                    {"area", area},
                                    {"area_stderr", area_stderr},
                                    {"c1", c1},
                                    {"c2", c2},
                                    {"sandwich", sandwich},
                                    {"attraction_fraction", attraction_fraction},
                                    {"probes", probes},
                                    {"probe_failures", probe_failures},
                                    {"max_v_step", max_v_step}};
  j["lqr"] = nlohmann::ordered_json{{"c_star", lqr_c_star},
                                    {"area", lqr_area}};
  nlohmann::ordered_json t = nlohmann::ordered_json::object();
  for (const auto& [stage, secs] : timings) t[stage] = secs;
  j["timings"] = t;
  return j.dump(2) + "\n";
}

CertificateReport run_pipeline(const PipelineConfig& cfg) {
  const int workers = env_workers();
  CertificateReport rep;
  rep.system = cfg.system;
  rep.config_hash = lyap::config_hash(cfg);
  rep.config_text = serialize_config(cfg);
  rep.eps = cfg.eps;
  rep.precision = cfg.precision;

  using Clock = std::chrono::steady_clock;
  const auto timed = [&](const char* stage, const std::function<void()>& fn) {
    const auto t0 = Clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("stage ") + stage + ": " +
                               e.what());
    }
    rep.timings.emplace_back(
        stage, std::chrono::duration<double>(Clock::now() - t0).count());
  };

  ControlSystem sys;
  timed("setup", [&] { sys = system_by_name(cfg.system); });
  const int n = sys.state_dim;
  const int m = sys.input_dim;

  SysIdResult sid;
  timed("learn-dynamics", [&] {
    TrainConfig tc;
    tc.n_samples = cfg.dyn_train_samples;
    tc.eval_samples = cfg.dyn_eval_samples;
    tc.hidden = cfg.dyn_hidden;
    tc.batch = cfg.dyn_batch;
    tc.max_epochs = cfg.dyn_max_epochs;
    tc.target_mse = cfg.dyn_target_mse;
    tc.lr = cfg.dyn_lr;
    tc.lr_min = cfg.dyn_lr_min;
    tc.plateau_epochs = cfg.dyn_plateau_epochs;
    tc.seed = cfg.seed;
    tc.workers = workers;
    sid = learn_dynamics(sys, tc);
  });
  rep.k_f = sys.jacobian_bound;
  rep.k_phi = sid.k_phi;
  rep.sample_gap = sid.sample_gap;
  rep.alpha = sid.alpha;

  // The LQR gain seeds the controller; its sampled ellipse is kept for the
  // ordinal region comparison.
  LqrSolution sol;
  Eigen::MatrixXd k_init(0, 0);
  timed("lqr", [&] {
    const Linearization lin = linearize(sys);
    sol = solve_care(lin, cfg.lqr_q * Eigen::MatrixXd::Identity(n, n),
                     m > 0 ? (cfg.lqr_r * Eigen::MatrixXd::Identity(m, m))
                           : Eigen::MatrixXd(0, 0));
    const LqrRoa ellipse = lqr_roa(sol, sys);
    rep.lqr_c_star = ellipse.c_star;
    rep.lqr_area = ellipse.area;
    k_init = lqr_initial_gain(sys, sol);
  });

  LyapResult lyap;
  timed("learn-lyapunov", [&] {
    LearnLyapConfig lc;
    lc.hidden = cfg.lyap_hidden;
    lc.epochs_per_round = cfg.lyap_epochs_per_round;
    lc.max_rounds = cfg.lyap_max_rounds;
    lc.lr = cfg.lyap_lr;
    lc.eps = cfg.eps;
    lc.precision = cfg.precision;
    lc.risk.C1 = cfg.lyap_c1;
    lc.risk.C2 = cfg.lyap_c2;
    lc.risk.C3 = cfg.lyap_c3;
    lc.risk.C4 = cfg.lyap_c4;
    lc.risk.roa_term = cfg.lyap_roa_term;
    lc.risk.a = cfg.lyap_roa_a;
    lc.risk.batch = cfg.lyap_batch;
    lc.risk.beta = cfg.beta;
    lc.seed = cfg.seed;
    lc.workers = workers;
    lyap = learn_lyapunov(sid, sys, k_init, lc);
  });
  rep.m = lyap.M;
  rep.beta = lyap.beta;
  rep.rounds = lyap.rounds;
  rep.chain_ok =
      lyap.beta > lyap.M * ((rep.k_f + rep.k_phi) * rep.sample_gap + rep.alpha);
  rep.learned_verdict = lyap.certified
                            ? "unsat"
                            : (cfg.lyap_max_rounds == 0 ? "skipped"
                                                        : "not-certified");

  ClosedLoopSystem loop =
      lyap.controller ? close_loop(sys, *lyap.controller) : autonomous(sys);

  if (lyap.certified) {
    timed("replay-true", [&] {
      std::vector<ExprPtr> xs;
      for (int i = 0; i < n; ++i) xs.push_back(var(i));
      VerifyProblem prob;
      prob.region = Region{sys.domain, cfg.eps, sys.domain_radius};
      prob.V = net_expr(lyap.V, xs)[0];
      prob.lie = lie_expr(lyap.V, loop.expr(xs));
      prob.beta = 0.0;
      FalsifyOptions fo;
      fo.precision = cfg.precision;
      fo.workers = workers;
      rep.true_verdict = verdict_name(falsify(prob, fo).kind);
    });
  }
  rep.certified = lyap.certified && rep.true_verdict == "unsat";

  LevelSetResult level;
  if (rep.certified) {
    timed("roa", [&] {
      LevelSetOptions lo;
      lo.eps = cfg.eps;
      lo.area_points = cfg.roa_area_points;
      lo.seed = cfg.seed;
      lo.precision = cfg.precision;
      lo.workers = workers;
      level = largest_level(lyap.V, sys, lo);
      rep.containment = level.containment;
      rep.c_star = level.c_star;
      rep.area = level.area;
      rep.area_stderr = level.area_stderr;
      rep.c1 = level.c1;
      rep.c2 = level.c2;
      rep.sandwich = level.sandwich;
      if (cfg.roa_probes > 0 && level.containment) {
        AttractionOptions ao;
        ao.dt = sys.name == "pendulum" ? 2e-4 : 1e-3;
        ao.workers = workers;
        const AttractionResult att = empirical_attraction(
            loop, level, lyap.V, cfg.roa_probes, cfg.seed, ao);
        rep.attraction_fraction = att.fraction;
        rep.probes = att.n_probes;
        rep.probe_failures = att.failures;
        rep.max_v_step = att.max_v_step;
      }
    });
  }

  timed("write", [&] {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out);
    std::vector<std::string> files;
    const auto emit = [&](const std::string& name, const std::string& text) {
      write_text_file(cfg.out + "/" + name, text);
      files.push_back(name);
    };
    save_net(lyap.V, cfg.out + "/V.nnet");
    files.push_back("V.nnet");
    save_net(sid.model, cfg.out + "/model.nnet");
    files.push_back("model.nnet");
    if (lyap.controller) {
      save_controller(*lyap.controller, cfg.out + "/controller.txt");
      files.push_back("controller.txt");
    }
    emit("config.txt", rep.config_text);
    std::ostringstream meta;
    meta << "system " << cfg.system << "\n"
         << "eps " << format_double(cfg.eps) << "\n"
         << "beta " << format_double(lyap.beta) << "\n"
         << "precision " << format_double(cfg.precision) << "\n"
         << "k_f " << format_double(rep.k_f) << "\n"
         << "alpha " << format_double(rep.alpha) << "\n"
         << "k_phi " << format_double(rep.k_phi) << "\n"
         << "sample_gap " << format_double(rep.sample_gap) << "\n"
         << "m_bound " << format_double(lyap.M) << "\n";
    emit("meta", meta.str());
    if (cfg.roa_grid > 0) {
      export_grid_file(lyap.V, loop, cfg.roa_grid, cfg.out + "/grid.csv");
      files.push_back("grid.csv");
    }
    emit("report.json", rep.to_json());
    files.push_back("manifest");
    std::sort(files.begin(), files.end());
    std::string manifest;
    for (const std::string& f : files) manifest += f + "\n";
    write_text_file(cfg.out + "/manifest", manifest);
  });
  return rep;
}

ReplayOutcome replay(const std::string& cert_dir, const std::string& system,
                     const std::string& against, const ReplayOptions& opt) {
  if (against != "true" && against != "learned")
    throw std::invalid_argument("replay: against must be 'true' or 'learned'");
  std::map<std::string, std::string> meta;
  try {
    meta = parse_key_values(read_text_file(cert_dir + "/meta"));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("replay: ") + e.what());
  }
  const auto meta_num = [&](const std::string& key, double fallback) {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : to_double(key, it->second);
  };
  if (meta.count("system") && meta.at("system") != system)
    throw std::invalid_argument("replay: certificate is for system '" +
                                meta.at("system") + "', not '" + system +
                                "'");

  const ControlSystem sys = system_by_name(system);
  const OneHiddenNet V = load_net(cert_dir + "/V.nnet");
  if (V.in_dim() != sys.state_dim || V.out_dim() != 1)
    throw std::runtime_error("replay: V.nnet does not match the system");

  ReplayOutcome out;
  CertificateReport& rep = out.report;
  rep.system = system;
  rep.eps = opt.eps >= 0.0 ? opt.eps : meta_num("eps", 0.1);
  rep.beta = meta_num("beta", 0.0);
  rep.precision =
      opt.precision > 0.0 ? opt.precision : meta_num("precision", 0.01);
  rep.k_f = meta_num("k_f", 0.0);
  rep.alpha = meta_num("alpha", 0.0);
  rep.k_phi = meta_num("k_phi", 0.0);
  rep.sample_gap = meta_num("sample_gap", 0.0);
  rep.m = meta_num("m_bound", 0.0);
  rep.chain_ok =
      rep.beta > rep.m * ((rep.k_f + rep.k_phi) * rep.sample_gap + rep.alpha);

  std::vector<ExprPtr> xs;
  for (int i = 0; i < sys.state_dim; ++i) xs.push_back(var(i));
  std::vector<ExprPtr> us;
  if (sys.input_dim > 0) {
    const SaturatingController ctrl =
        load_controller(cert_dir + "/controller.txt");
    us = controller_expr(ctrl, xs);
  }
  std::vector<ExprPtr> field;
  double beta_used = against == "true" ? 0.0 : rep.beta;
  if (!std::isnan(opt.beta)) beta_used = opt.beta;
  if (against == "true") {
    field = sys.rhs_expr(xs, us);
  } else {
    const OneHiddenNet model = load_net(cert_dir + "/model.nnet");
    std::vector<ExprPtr> ins = xs;
    ins.insert(ins.end(), us.begin(), us.end());
    field = net_expr(model, ins);
  }

  VerifyProblem prob;
  prob.region = Region{sys.domain, rep.eps, sys.domain_radius};
  prob.V = net_expr(V, xs)[0];
  prob.lie = lie_expr(V, field);
  prob.beta = beta_used;
  out.beta_checked = beta_used;
  FalsifyOptions fo;
  fo.precision = rep.precision;
  fo.workers = opt.workers;

  const auto t0 = std::chrono::steady_clock::now();
  out.verdict = falsify(prob, fo);
  rep.timings.emplace_back(
      "replay", std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count());
  const std::string name = verdict_name(out.verdict.kind);
  (against == "true" ? rep.true_verdict : rep.learned_verdict) = name;
  rep.certified = out.verdict.kind == VerdictKind::kUnsat;
  return out;
}

}  // namespace lyap
