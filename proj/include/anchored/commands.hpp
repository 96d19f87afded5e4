#pragma once

// Implementations of the command-line subcommands. Each run_* function
// computes a result struct; each cmd_* function runs it, writes the JSON
// report to config.out (always, even when a check fails), prints a short
// human-readable summary and returns the process exit status.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "anchored/bench.hpp"
#include "anchored/ensemble.hpp"
#include "anchored/gp_reference.hpp"

namespace anchored {

struct RunConfig {
  std::string activation = "relu";
  Index hidden_width = 100;
  Index members = 10;
  PriorSpec prior;
  double rbf_width = 1.0;
  std::optional<double> sigma_eps_sq;
  std::uint64_t seed = 0;
  int epochs = 5000;
  double learning_rate = 0.01;
  std::string optimizer = "adam";  // adam | gd
  double early_stop_tol = 0.0;
  std::string out;
  int threads = 1;

  // toy
  std::string curves;
  int grid_points = 201;
  std::optional<double> grid_halfwidth;

  // benchmark
  std::string dataset;
  std::string manifest;
  int splits = 5;
  double train_fraction = 0.9;

  // theorem1
  std::vector<Index> h_values{10, 100, 1000};
  int seeds = 5;

  // oracle-check
  int pairs = 100;
  Index anchors = 200000;
  bool inject_prior_anchor = false;

  // gradcheck
  int instances = 20;
};

/// Defaults for a subcommand: benchmark uses H = 50, m = 5 and 2000
/// epochs; everything else the struct defaults (toy: H = 100, m = 10).
RunConfig defaults_for(std::string_view command);

/// Serialises every field. Keys match the config-file schema.
nlohmann::json to_json(const RunConfig& c);

/// Overwrites the fields present in `j`; unknown keys are rejected.
void merge_config(RunConfig& c, const nlohmann::json& j);

/// FNV-1a (64-bit, hex) of the canonical JSON of every field that can
/// affect results (out, curves and threads excluded).
std::string config_hash(const RunConfig& c);

TrainConfig train_config(const RunConfig& c);

// ---- oracle-check --------------------------------------------------------

struct OracleCheckResult {
  int pairs = 0;
  double max_analytic_error = 0.0;   // max |A S0 A^T - S_post|_F / |S_post|_F
  double mc_mean_error = 0.0;        // worst over the Monte-Carlo pairs
  double mc_cov_error = 0.0;
  double mc_variance_ratio = 0.0;    // trace(sample cov) / trace(S_post)
  bool injected_prior_anchor = false;
  bool passed = false;
};

OracleCheckResult run_oracle_check(const RunConfig& c);

// ---- toy -----------------------------------------------------------------

/// 12 points in two clusters on [-2, -0.5] and [0.7, 2], y = sin(2x) + noise
/// with noise sd 0.05; sigma_eps_sq is set to 0.05^2.
RegressionDataset make_toy_dataset(std::uint64_t seed);

struct ToyResult {
  RegressionDataset data;
  VectorXd grid;
  std::vector<PredictiveDist> ensemble;
  std::vector<PredictiveDist> gp;
  double coverage = 0.0;  // share of grid points whose GP mean lies in the
                          // ensemble's mean +- 2 sd (total) band
  double data_radius = 0.0;
  double far_x = 0.0;
  double far_ensemble_mean = 0.0;
  double far_ensemble_epistemic = 0.0;
  double far_gp_mean = 0.0;
  double far_gp_var = 0.0;     // GP posterior latent variance at far_x
  double far_prior_var = 0.0;  // k(far_x, far_x)
  // relu/erf: coverage >= 0.9. rbf: far-field ensemble |mean| < 0.1 and GP
  // |mean| < 0.01. far_variance_ok is reported separately.
  bool far_variance_ok = false;
  bool passed = false;
};

ToyResult run_toy(const RunConfig& c);
void write_toy_curves(std::ostream& os, const ToyResult& r);

// ---- gradcheck -----------------------------------------------------------

struct GradcheckRow {
  Activation activation;
  int instances = 0;
  double max_rel_error = 0.0;
};

/// Central finite differences with step 1e-5 on random small problems.
std::vector<GradcheckRow> run_gradcheck(int instances, std::uint64_t seed);

inline constexpr double kGradcheckTolerance = 1e-5;

// ---- theorem1 ------------------------------------------------------------

struct Theorem1Row {
  Activation activation;
  std::uint64_t seed = 0;
  std::vector<Theorem1Point> points;
  bool decreasing = false;
};

std::vector<Theorem1Row> run_theorem1(const RunConfig& c);

// ---- benchmark -----------------------------------------------------------

/// Observation-noise variances (normalised units) used per dataset.
std::optional<double> default_noise_var(const std::string& dataset);

/// Resolves a dataset through the manifest, or the built-in "synthetic".
RegressionDataset load_dataset(const RunConfig& c);
BenchConfig bench_config(const RunConfig& c);

int cmd_oracle_check(const RunConfig& c, std::ostream& log);
int cmd_toy(const RunConfig& c, std::ostream& log);
int cmd_benchmark(const RunConfig& c, std::ostream& log);
int cmd_gradcheck(const RunConfig& c, std::ostream& log);
int cmd_theorem1(const RunConfig& c, std::ostream& log);

}  // namespace anchored
