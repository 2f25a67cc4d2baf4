#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakrec/channel.hpp"
#include "weakrec/preprocess.hpp"
#include "weakrec/rmt.hpp"

namespace weakrec::harness {

inline constexpr int kSchemaVersion = 1;

enum class Task { Thresholds, Predict, Simulate, Amp, CdpDemo, SpikeCheck };

std::string to_string(Task t);
Task parse_task(const std::string& s);

// "start:stop:step", "a,b,c" or a single value; strictly increasing
std::vector<double> parse_delta_grid(const std::string& text);

struct ExperimentConfig {
  Task task = Task::Simulate;
  Field field = Field::Complex;
  std::string channel = "pr";  // pr | gap | custom:<csv>
  double sigma2 = 0.0;
  std::vector<std::string> preprocess{"optimal-pr"};
  std::vector<double> deltas;
  bool delta_relative = false;  // amp: deltas are multiples of delta_u
  int d = 4096;
  int trials = 1;
  std::uint64_t seed = 0;
  std::string output;  // file prefix; empty: nothing written

  std::string solver = "power";  // power | lanczos | dense
  double shift = std::numeric_limits<double>::quiet_NaN();  // NaN: automatic
  double tol = 1e-7;
  int max_iter = 10000;
  int lanczos_max_dim = 1500;

  double mu0 = 0.5;
  int t_max = 10;
  std::string onsager = "se";  // se | empirical | off
  bool linearize = false;

  std::string image;  // cdp-demo: PGM path, empty for the synthetic gradient
  int width = 64, height = 64;
  int views = 6;

  std::string law = "two-atom:1,-0.5";
  double alpha = std::numeric_limits<double>::quiet_NaN();  // spike-check: alpha*, cdp-demo: shift
  int n = 2000;

  nlohmann::json to_json() const;
  // unknown keys are rejected; missing keys keep their defaults
  static ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base);
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;
  // FNV-1a of the canonical JSON, hex
  std::string hash() const;
};

// seed from WEAKREC_SEED, else 0
std::uint64_t default_seed();

std::shared_ptr<const Marginals> make_marginals(const ExperimentConfig& cfg);

struct PredictionRow {
  double delta = 0.0;
  std::string preprocess;
  rmt::OverlapPrediction pred;
  bool ok = true;
  std::string error;
};

std::vector<PredictionRow> predict(const ExperimentConfig& cfg);

struct TrialRecord {
  double delta = 0.0;
  int d = 0;
  long n = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::string preprocess;
  double overlap2 = 0.0;
  double eig1 = 0.0;
  double eig2 = std::numeric_limits<double>::quiet_NaN();
  int iters = 0;
  bool converged = false;
  double shift = 0.0;
  double runtime_ms = 0.0;
  double pred_rho2 = std::numeric_limits<double>::quiet_NaN();
  double pred_lam1 = std::numeric_limits<double>::quiet_NaN();
  double pred_lam2 = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::vector<TrialRecord> records;  // sorted by (delta, preprocess, trial)
  std::vector<PredictionRow> predictions;
  bool complete = true;  // false when the time budget ran out
  int trials_done = 0;
  double seconds = 0.0;
  std::vector<std::string> warnings;
};

// Trials are sampled once at the largest delta; smaller deltas use the leading rows.
SweepResult simulate(const ExperimentConfig& cfg, double budget_seconds = std::numeric_limits<double>::infinity());

struct SummaryRow {
  double delta = 0.0;
  std::string preprocess;
  int trials = 0;
  double mean_overlap2 = 0.0;
  double stderr_overlap2 = 0.0;
  double mean_eig1 = 0.0;
  double mean_eig2 = 0.0;
  double pred_rho2 = 0.0;
  double pred_lam1 = 0.0;
  double pred_lam2 = 0.0;
};

std::vector<SummaryRow> summarize(const SweepResult& r);

struct SpikeResult {
  double prediction = 0.0;
  double psi_prime = 0.0;
  std::vector<double> lambda1;  // one per seed
  double mean = 0.0;
};

rmt::SpectralLaw parse_spectral_law(const std::string& text, double alpha_star, double delta);

// S_n = (1/n) U M U^*, U (d-1) x n standard complex Gaussian, M diagonal with the spike alpha*
// and the two-atom bulk in exact proportions; d = round(n / delta)
SpikeResult spike_check(const ExperimentConfig& cfg);

struct CdpResult {
  double overlap2 = 0.0;
  double eigval = 0.0;
  int iters = 0;
  bool converged = false;
  int views = 0;
  std::string preprocess;
  std::vector<unsigned char> image;  // the reconstructed greymap bytes
};

CdpResult cdp_demo(const ExperimentConfig& cfg);

struct AmpSummary {
  double delta = 0.0;
  double delta_u = 0.0;
  int trial = 0;
  std::vector<double> mu_se;
  std::vector<double> overlap;
  std::vector<double> znorm;
  std::vector<double> zhat_norm;
  bool diverged = false;
  double lin_top = std::numeric_limits<double>::quiet_NaN();
  double lin_max_imag = std::numeric_limits<double>::quiet_NaN();
  double dstar_top = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

std::vector<AmpSummary> amp_experiment(const ExperimentConfig& cfg);

// Runs the configured task, writes <output>.json (+ .csv / .pgm where applicable) when an
// output prefix is set, and returns the JSON summary.
nlohmann::json run(const ExperimentConfig& cfg);

}  // namespace weakrec::harness
