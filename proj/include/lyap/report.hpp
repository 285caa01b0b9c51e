#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lyap/dynamics.hpp"
#include "lyap/lqr.hpp"
#include "lyap/verifier.hpp"

namespace lyap {

inline constexpr const char* kToolVersion = "lyapcert 0.1.0";
inline constexpr int kReportSchema = 1;

// Text-file plumbing shared with the command-line front end: whole-file
// read/write, "key value" line parsing ('#' comments ignored), and lossless
// (17 significant digit) double formatting.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_double(double v);

// Run settings as a flat keyed text file: one "key = value" per line, '#'
// comments and blank lines ignored. Every field has a default; unknown keys
// are rejected so a typo cannot silently fall back.
struct PipelineConfig {
  std::string system = "vanderpol";
  std::uint64_t seed = 0;
  std::string out = "out";
  // dynamics model
  int dyn_hidden = 100;
  std::int64_t dyn_train_samples = 250'000;
  std::int64_t dyn_eval_samples = 1'000'000;
  int dyn_batch = 512;
  int dyn_max_epochs = 200;
  double dyn_lr = 0.01;
  double dyn_lr_min = 1e-5;
  int dyn_plateau_epochs = 10;
  double dyn_target_mse = 1e-6;
  // Lyapunov candidate, controller gain, and the risk weights
  int lyap_hidden = 6;
  double lyap_c1 = 1.0;
  double lyap_c2 = 1.0;
  double lyap_c3 = 1.0;
  double lyap_c4 = 0.01;
  bool lyap_roa_term = false;
  double lyap_roa_a = 1.0;
  int lyap_batch = 500;
  int lyap_max_rounds = 50;
  int lyap_epochs_per_round = 300;
  double lyap_lr = 0.01;
  // verifier and margins
  double precision = 0.01;
  double eps = 0.1;
  double beta = 0.0;  // initial margin guess; floors the trained margin
  // LQR weights Q = lqr_q I, R = lqr_r I
  double lqr_q = 1.0;
  double lqr_r = 1.0;
  // level-set extraction and validation
  std::int64_t roa_area_points = 1'000'000;
  int roa_probes = 1000;
  int roa_grid = 0;  // 0: skip the CSV export

  bool operator==(const PipelineConfig&) const = default;
};

PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);
// Every field materialized in a fixed order; parse round-trips exactly.
std::string serialize_config(const PipelineConfig& cfg);
// FNV-1a of the materialized form, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

// Worker count from the LYAPCERT_WORKERS environment variable (>= 1).
int env_workers();

// Gain seed for the saturating controller u = C tanh(kx + b): with the
// channel caps C and feedforward bias b the trainer itself will build, the
// returned k makes the loop linearize to the LQR one, C diag(1 - tanh(b)^2) k
// = -K. Returns a 0 x n matrix for autonomous plants.
Eigen::MatrixXd lqr_initial_gain(const ControlSystem& sys,
                                 const LqrSolution& sol);

// Everything a certification run measured, serialized as JSON with a fixed
// key order so identical runs produce identical bytes (timings aside).
struct CertificateReport {
  int schema = kReportSchema;
  std::string version = kToolVersion;
  std::string system;
  std::string config_hash;
  std::string config_text;
  // model-error chain
  double k_f = 0.0;
  double k_phi = 0.0;
  double sample_gap = 0.0;
  double alpha = 0.0;
  // certificate margins
  double m = 0.0;
  double beta = 0.0;
  double eps = 0.0;
  double precision = 0.0;
  bool chain_ok = false;  // beta > m * ((k_f + k_phi) * sample_gap + alpha)
  // verdicts: "unsat", "delta-sat", "unknown", "not-certified", "skipped"
  std::string learned_verdict = "skipped";
  std::string true_verdict = "skipped";
  bool certified = false;
  int rounds = 0;
  // level set
  bool containment = false;
  double c_star = 0.0;
  double area = 0.0;
  double area_stderr = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  bool sandwich = false;
  double attraction_fraction = 0.0;
  int probes = 0;
  int probe_failures = 0;
  double max_v_step = 0.0;
  // sampled LQR ellipse, for the ordinal comparison
  double lqr_c_star = 0.0;
  double lqr_area = 0.0;
  std::vector<std::pair<std::string, double>> timings;  // stage, seconds

  std::string to_json() const;
};

// Learns the dynamics, trains and certifies the Lyapunov pair, replays the
// certificate against the true field, extracts the level set, and writes
// all artifacts (report.json, config.txt, V.nnet, controller.txt,
// model.nnet, meta, optional grid.csv, manifest) under cfg.out. Uncertified
// runs still produce the partial report and artifacts. Stage failures are
// rethrown with the stage name prefixed.
CertificateReport run_pipeline(const PipelineConfig& cfg);

// Re-verifies a stored certificate directory (V.nnet, optional
// controller.txt, meta) for the named benchmark. against = "true" falsifies
// the real closed loop; against = "learned" loads model.nnet from the
// directory. Defaults come from the certificate: its precision and radius,
// and a margin of 0 against the true field or the stored one against the
// model.
struct ReplayOptions {
  double precision = 0.0;  // 0: the stored precision
  double eps = -1.0;       // negative: the stored inner radius
  double beta = std::numeric_limits<double>::quiet_NaN();  // NaN: per mode
  int workers = 1;
};

struct ReplayOutcome {
  Verdict verdict;
  CertificateReport report;
  double beta_checked = 0.0;  // the margin the falsifier actually used
};
ReplayOutcome replay(const std::string& cert_dir, const std::string& system,
                     const std::string& against, const ReplayOptions& opt = {});

}  // namespace lyap
