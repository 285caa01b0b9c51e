#include <doctest.h>

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lyap/cli.hpp"
#include "lyap/dynamics.hpp"
#include "lyap/lqr.hpp"
#include "lyap/network.hpp"
#include "lyap/report.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// The materialized default configuration, frozen. The hash below is FNV-1a
// over exactly these bytes, cross-checked by an independent implementation.
const char* kDefaultConfigText =
    "system = vanderpol\n"
    "seed = 0\n"
    "out = out\n"
    "dyn_hidden = 100\n"
    "dyn_train_samples = 250000\n"
    "dyn_eval_samples = 1000000\n"
    "dyn_batch = 512\n"
    "dyn_max_epochs = 200\n"
    "dyn_lr = 0.01\n"
    "dyn_lr_min = 1.0000000000000001e-05\n"
    "dyn_plateau_epochs = 10\n"
    "dyn_target_mse = 9.9999999999999995e-07\n"
    "lyap_hidden = 6\n"
    "lyap_c1 = 1\n"
    "lyap_c2 = 1\n"
    "lyap_c3 = 1\n"
    "lyap_c4 = 0.01\n"
    "lyap_roa_term = 0\n"
    "lyap_roa_a = 1\n"
    "lyap_batch = 500\n"
    "lyap_max_rounds = 50\n"
    "lyap_epochs_per_round = 300\n"
    "lyap_lr = 0.01\n"
    "precision = 0.01\n"
    "eps = 0.10000000000000001\n"
    "beta = 0\n"
    "lqr_q = 1\n"
    "lqr_r = 1\n"
    "roa_area_points = 1000000\n"
    "roa_probes = 1000\n"
    "roa_grid = 0\n";
const char* kDefaultConfigHash = "0c0f08b46d723c54";

std::string cert_path(const char* name) {
  return std::string(LYAP_SOURCE_DIR) + "/data/certificates/" + name;
}

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs one command line through the real front end, capturing stdout.
CliResult run_argv(std::vector<std::string> args) {
  std::vector<char*> argv;
  argv.reserve(args.size());
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream cap;
  std::streambuf* old = std::cout.rdbuf(cap.rdbuf());
  CliResult r;
  r.code = lyap::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  r.out = cap.str();
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("default config: golden materialization and frozen hash") {
  const lyap::PipelineConfig def;
  CHECK(lyap::serialize_config(def) == kDefaultConfigText);
  CHECK(lyap::config_hash(def) == kDefaultConfigHash);
  CHECK(lyap::parse_config("") == def);
  CHECK(lyap::parse_config(kDefaultConfigText) == def);
}

TEST_CASE("config parsing: overrides, comments, and round trips") {
  const std::string text =
      "# run settings\n"
      "\n"
      "system = pendulum\n"
      "  seed =  42  \n"
      "dyn_lr = 0.25\n"
      "lyap_roa_term = true\n"
      "lyap_roa_a = 2.5\n"
      "eps = 0.4\n"
      "beta = 0.02\n"
      "roa_grid = 400\n";
  const lyap::PipelineConfig cfg = lyap::parse_config(text);
  CHECK(cfg.system == "pendulum");
  CHECK(cfg.seed == 42);
  CHECK(cfg.dyn_lr == 0.25);
  CHECK(cfg.lyap_roa_term);
  CHECK(cfg.lyap_roa_a == 2.5);
  CHECK(cfg.eps == 0.4);
  CHECK(cfg.beta == 0.02);
  CHECK(cfg.roa_grid == 400);
  // untouched keys keep their defaults
  CHECK(cfg.dyn_hidden == 100);
  CHECK(cfg.lyap_batch == 500);

  // serialize -> parse -> serialize is a fixpoint, and "0"/"false" both work
  const std::string ser = lyap::serialize_config(cfg);
  CHECK(lyap::serialize_config(lyap::parse_config(ser)) == ser);
  CHECK_FALSE(lyap::parse_config("lyap_roa_term = false").lyap_roa_term);
  CHECK(lyap::config_hash(cfg) != kDefaultConfigHash);
}

TEST_CASE("config parsing rejects unknown keys and malformed values") {
  CHECK_THROWS_AS(lyap::parse_config("sytem = pendulum"),
                  std::invalid_argument);
  CHECK_THROWS_AS(lyap::parse_config("seed = soon"), std::invalid_argument);
  CHECK_THROWS_AS(lyap::parse_config("dyn_hidden = 1.5"),
                  std::invalid_argument);
  CHECK_THROWS_AS(lyap::parse_config("lyap_roa_term = maybe"),
                  std::invalid_argument);
  CHECK_THROWS_AS(lyap::parse_config("precision 0.01"),
                  std::invalid_argument);
  CHECK_THROWS_AS(lyap::parse_config("eps = "), std::invalid_argument);
}

TEST_CASE("text helpers: key-value lines and lossless doubles") {
  const auto kv = lyap::parse_key_values(
      "# certificate data\n\nalpha 0.005\nnote two words\n");
  CHECK(kv.at("alpha") == "0.005");
  CHECK(kv.at("note") == "two words");
  CHECK_THROWS_AS(lyap::parse_key_values("loneword\n"), std::invalid_argument);

  for (const double v : {0.1, 1e-5, 9.9999999999999995e-07, 33.214,
                         -0.51234567890123456, 2.0}) {
    const std::string s = lyap::format_double(v);
    CHECK(std::strtod(s.c_str(), nullptr) == v);
  }
  CHECK(lyap::format_double(2.0) == "2");
}

TEST_CASE("report JSON is byte-stable modulo the timing section") {
  lyap::CertificateReport a;
  a.system = "pendulum";
  a.config_hash = "deadbeefdeadbeef";
  a.k_f = 33.214;
  a.beta = 0.02;
  a.chain_ok = true;
  a.timings = {{"setup", 0.1}, {"learn-dynamics", 12.5}};
  lyap::CertificateReport b = a;
  b.timings = {{"setup", 0.2}, {"learn-dynamics", 99.9}, {"write", 1.0}};

  CHECK(a.to_json() == a.to_json());
  CHECK(a.to_json() != b.to_json());
  json ja = json::parse(a.to_json());
  json jb = json::parse(b.to_json());
  ja.erase("timings");
  jb.erase("timings");
  CHECK(ja.dump(2) == jb.dump(2));
}

TEST_CASE("pipeline with zero training rounds writes an honest partial run") {
  const fs::path out = fs::temp_directory_path() / "lyapcert_test_pipeline";
  fs::remove_all(out);

  lyap::PipelineConfig cfg;
  cfg.system = "vanderpol";
  cfg.out = out.string();
  cfg.seed = 1;
  cfg.dyn_train_samples = 2000;
  cfg.dyn_eval_samples = 4000;
  cfg.dyn_max_epochs = 3;
  cfg.lyap_max_rounds = 0;
  cfg.roa_probes = 0;

  const lyap::CertificateReport rep = lyap::run_pipeline(cfg);
  CHECK_FALSE(rep.certified);
  CHECK(rep.learned_verdict == "skipped");
  CHECK(rep.true_verdict == "skipped");
  CHECK(rep.rounds == 0);
  CHECK_FALSE(rep.chain_ok);
  CHECK(rep.k_f == doctest::Approx(3.4599));
  CHECK(rep.k_phi > 0.0);
  CHECK(rep.alpha > 0.0);
  CHECK(rep.sample_gap > 0.0);
  CHECK(rep.lqr_area == doctest::Approx(2.7959).epsilon(1e-3));
  CHECK(rep.config_hash == lyap::config_hash(cfg));

  // artifacts: exactly the manifest's files, sorted, plus honest contents
  const std::string manifest = lyap::read_text_file((out / "manifest").string());
  std::set<std::string> listed;
  std::istringstream lines(manifest);
  for (std::string line; std::getline(lines, line);) listed.insert(line);
  std::set<std::string> present;
  for (const auto& e : fs::directory_iterator(out))
    present.insert(e.path().filename().string());
  CHECK(listed == present);
  CHECK(listed.count("report.json") == 1);
  CHECK(listed.count("config.txt") == 1);
  CHECK(listed.count("V.nnet") == 1);
  CHECK(listed.count("model.nnet") == 1);
  CHECK(listed.count("meta") == 1);
  CHECK(listed.count("controller.txt") == 0);  // autonomous plant

  CHECK(lyap::parse_config(lyap::read_text_file((out / "config.txt").string())) ==
        cfg);
  // the stored report matches the returned one up to the timing section
  // (the file is written before the write stage's own timing exists)
  json stored = json::parse(lyap::read_text_file((out / "report.json").string()));
  json returned = json::parse(rep.to_json());
  stored.erase("timings");
  returned.erase("timings");
  CHECK(stored.dump(2) == returned.dump(2));

  // identical config + seed reruns byte-identically, timings aside
  json first = json::parse(rep.to_json());
  const lyap::CertificateReport again = lyap::run_pipeline(cfg);
  json second = json::parse(again.to_json());
  first.erase("timings");
  second.erase("timings");
  CHECK(first.dump(2) == second.dump(2));

  // the written directory replays as a learned-model check without throwing
  const lyap::ReplayOutcome oc =
      lyap::replay(out.string(), "vanderpol", "learned");
  CHECK(oc.report.learned_verdict != "skipped");
  CHECK(oc.report.certified == (oc.verdict.kind == lyap::VerdictKind::kUnsat));

  fs::remove_all(out);
}

TEST_CASE("replay checks the stored pendulum certificate against the "
          "true dynamics") {
  const lyap::ReplayOutcome oc =
      lyap::replay(cert_path("pendulum"), "pendulum", "true");
  CHECK(oc.verdict.kind == lyap::VerdictKind::kUnsat);
  CHECK(oc.verdict.leaves_proven > 0);
  CHECK(oc.beta_checked == 0.0);
  const lyap::CertificateReport& r = oc.report;
  CHECK(r.true_verdict == "unsat");
  CHECK(r.learned_verdict == "skipped");
  CHECK(r.certified);
  CHECK(r.k_f == doctest::Approx(33.214));
  CHECK(r.k_phi == doctest::Approx(633.806));
  CHECK(r.alpha == doctest::Approx(0.005));
  CHECK(r.sample_gap == doctest::Approx(5e-5));
  CHECK(r.m == doctest::Approx(0.51));
  CHECK(r.beta == doctest::Approx(0.02));
  CHECK(r.eps == doctest::Approx(0.4));
  CHECK(r.precision == doctest::Approx(0.01));
  CHECK(r.chain_ok);
  REQUIRE(r.timings.size() == 1);
  CHECK(r.timings[0].first == "replay");
  CHECK(r.timings[0].second > 0.0);
}

TEST_CASE("replay honors precision, radius, and margin overrides") {
  lyap::ReplayOptions opt;
  opt.precision = 0.05;
  opt.eps = 0.45;
  opt.beta = 0.1;
  const lyap::ReplayOutcome oc =
      lyap::replay(cert_path("pendulum"), "pendulum", "true", opt);
  CHECK(oc.report.precision == 0.05);
  CHECK(oc.report.eps == 0.45);
  CHECK(oc.beta_checked == 0.1);
  CHECK(oc.verdict.kind != lyap::VerdictKind::kUnknown);
}

TEST_CASE("replay failure modes") {
  CHECK_THROWS_AS(lyap::replay("/nonexistent/cert", "pendulum", "true"),
                  std::runtime_error);
  CHECK_THROWS_AS(lyap::replay(cert_path("pendulum"), "vanderpol", "true"),
                  std::invalid_argument);
  CHECK_THROWS_AS(lyap::replay(cert_path("pendulum"), "pendulum", "model"),
                  std::invalid_argument);
  // the stored pendulum directory ships no learned model to check against
  CHECK_THROWS_AS(lyap::replay(cert_path("pendulum"), "pendulum", "learned"),
                  std::runtime_error);
}

TEST_CASE("LQR gain seed makes the saturating loop match the LQR "
          "linearization") {
  const lyap::ControlSystem sys = lyap::system_by_name("pendulum");
  const lyap::Linearization lin = lyap::linearize(sys);
  const lyap::LqrSolution sol =
      lyap::solve_care(lin, Eigen::MatrixXd::Identity(2, 2),
                       Eigen::MatrixXd::Identity(1, 1));
  const Eigen::MatrixXd k = lyap::lqr_initial_gain(sys, sol);
  REQUIRE(k.rows() == 1);
  REQUIRE(k.cols() == 2);

  // Close the loop with the trainer's own controller construction and
  // finite-difference its field at the origin: the Jacobian must be the LQR
  // closed loop A - B K.
  lyap::SaturatingController ctrl;
  ctrl.C = Eigen::MatrixXd::Zero(1, 1);
  ctrl.C(0, 0) = std::max(std::abs(sys.input_box.dims[0].lo),
                          std::abs(sys.input_box.dims[0].hi));
  ctrl.b = lyap::solve_saturating_bias(ctrl.C, sys.equilibrium_shift);
  ctrl.k = k;
  const lyap::ClosedLoopSystem loop = lyap::close_loop(sys, ctrl);
  const double h = 1e-6;
  Eigen::MatrixXd jac(2, 2);
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd ep = Eigen::VectorXd::Zero(2);
    ep(j) = h;
    jac.col(j) = (loop.eval(ep) - loop.eval(-ep)) / (2 * h);
  }
  const Eigen::MatrixXd acl = lin.A - lin.B * sol.K;
  CHECK((jac - acl).cwiseAbs().maxCoeff() < 1e-5);

  // autonomous plants get an empty gain
  const lyap::ControlSystem vdp = lyap::system_by_name("vanderpol");
  const lyap::Linearization vlin = lyap::linearize(vdp);
  const lyap::LqrSolution vsol = lyap::solve_care(
      vlin, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd(0, 0));
  const Eigen::MatrixXd vk = lyap::lqr_initial_gain(vdp, vsol);
  CHECK(vk.rows() == 0);
  CHECK(vk.cols() == 2);
}

TEST_CASE("worker count comes from the environment") {
  const char* saved = std::getenv("LYAPCERT_WORKERS");
  const std::string saved_copy = saved ? saved : "";

  unsetenv("LYAPCERT_WORKERS");
  CHECK(lyap::env_workers() == 1);
  setenv("LYAPCERT_WORKERS", "3", 1);
  CHECK(lyap::env_workers() == 3);
  setenv("LYAPCERT_WORKERS", "0", 1);
  CHECK(lyap::env_workers() == 1);
  setenv("LYAPCERT_WORKERS", "junk", 1);
  CHECK(lyap::env_workers() == 1);

  if (saved)
    setenv("LYAPCERT_WORKERS", saved_copy.c_str(), 1);
  else
    unsetenv("LYAPCERT_WORKERS");
}

TEST_CASE("command line: exit codes and verdict JSON") {
  // a valid certificate replays clean: exit 0, unsat verdict
  CliResult ok = run_argv({"lyapcert", "replay", "--cert",
                           cert_path("pendulum"), "--system", "pendulum"});
  CHECK(ok.code == 0);
  json j = json::parse(ok.out);
  CHECK(j["verdict"] == "unsat");
  CHECK(j["leaves_proven"].get<int>() > 0);
  CHECK(j["against"] == "true");
  CHECK(j["report"]["verdicts"]["true"] == "unsat");

  // a refuted certificate: exit 2, delta-sat with a concrete witness
  CliResult bad = run_argv({"lyapcert", "replay", "--cert",
                            cert_path("vanderpol_ref"), "--system",
                            "vanderpol"});
  CHECK(bad.code == 2);
  json jb = json::parse(bad.out);
  CHECK(jb["verdict"] == "delta-sat");
  REQUIRE(jb["witness"].size() == 2);
  CHECK(jb["violated_clause"] == "decrease");

  // errors exit 1: unknown benchmark, and a missing learned model (verify
  // defaults to the learned-dynamics check)
  CHECK(run_argv({"lyapcert", "replay", "--cert", cert_path("pendulum"),
                  "--system", "nosuch"})
            .code == 1);
  CHECK(run_argv({"lyapcert", "verify", "--cert", cert_path("pendulum"),
                  "--system", "pendulum"})
            .code == 1);

  // argument errors are neither success nor "uncertified"
  CHECK(run_argv({"lyapcert", "replay", "--cert", cert_path("pendulum"),
                  "--system", "pendulum", "--against", "bogus"})
            .code != 0);
  CHECK(run_argv({"lyapcert", "frobnicate"}).code != 0);

  // --version prints the tool version
  CliResult ver = run_argv({"lyapcert", "--version"});
  CHECK(ver.code == 0);
  CHECK(ver.out.find("lyapcert 0.1.0") != std::string::npos);
}

}  // TEST_SUITE
