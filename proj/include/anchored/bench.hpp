#pragma once

// Regression benchmark plumbing: CSV ingestion, standardisation, random
// train/test splits, RMSE / Gaussian NLL, the anchored-ensemble benchmark
// protocol and the wide-network prior-dominance diagnostic.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anchored/dataset.hpp"
#include "anchored/ensemble.hpp"
#include "anchored/predictive.hpp"

namespace anchored {

/// Reads a numeric CSV (comma-separated, or whitespace-separated when a line
/// has no comma). A first row containing any non-numeric cell is treated as
/// a header. `target_column` is a header name or a 0-based column index;
/// negative indices count from the end. Every other column is a feature.
RegressionDataset load_csv(const std::string& path,
                           const std::string& target_column);

/// Column means and population standard deviations of `data`.
NormStats compute_norm(const RegressionDataset& data);

/// Standardises features and target with the given statistics. Constant
/// features (std 0) map to 0. Throws if `data` is already normalised.
RegressionDataset apply_norm(const RegressionDataset& data,
                             const NormStats& stats);

/// apply_norm(data, compute_norm(data)).
RegressionDataset normalize(const RegressionDataset& data);

double denormalize_target(double value, const NormStats& stats);
PredictiveDist denormalize(const PredictiveDist& d, const NormStats& stats);

/// Random disjoint split; the train part has round(train_fraction * N) rows,
/// clamped so both parts are non-empty.
std::pair<RegressionDataset, RegressionDataset> split(
    const RegressionDataset& data, double train_fraction, std::uint64_t seed);

/// Row indices of the train part of split(data, ...), in order.
std::vector<Index> split_indices(Index n, double train_fraction,
                                 std::uint64_t seed);

double rmse(const VectorXd& predictions, const VectorXd& targets);
double gaussian_nll(const std::vector<PredictiveDist>& dists,
                    const VectorXd& targets);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& values);

struct SplitResult {
  int split = 0;
  double rmse = 0.0;
  double nll = 0.0;
  double seconds = 0.0;
};

struct MetricReport {
  std::string dataset;
  std::vector<SplitResult> splits;
  MeanStderr rmse;
  MeanStderr nll;
};

struct BenchConfig {
  Activation activation = Activation::relu;
  Index hidden_width = 50;
  Index members = 5;
  PriorSpec prior;
  // Prior variance of first-layer weights is first_layer_var / D when set.
  bool scale_first_layer_by_inputs = true;
  TrainConfig train;
  int splits = 5;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Runs `config.splits` random splits: normalise on the train part, train an
/// anchored ensemble, score the test part in the original target units.
MetricReport run_benchmark(const RegressionDataset& raw,
                           const BenchConfig& config);

/// Synthetic y = x w + noise data, w ~ N(0, I), x ~ N(0, I).
RegressionDataset make_linear_dataset(Index n, Index d, double noise_var,
                                      std::uint64_t seed);

// Prior-dominance diagnostic on the output layer of a random-features
// network. For output-layer features Phi (N x (H+1), last column the bias),
// prior variances v and noise variance s2, returns
//   trace(Sigma_prior^2 Sigma_like^-1) / H = sum_k v_k^2 |Phi_k|^2 / (s2 H)
// using the likelihood precision Sigma_like^-1 = Phi^T Phi / s2 directly.
double prior_dominance_ratio(const MatrixXd& features,
                             const VectorXd& prior_var, double noise_var);

struct Theorem1Point {
  Index hidden_width = 0;
  double trace_ratio = 0.0;
};

/// For each width, draws a first layer from the prior (seeded), builds the
/// output-layer features on `data` and evaluates prior_dominance_ratio.
std::vector<Theorem1Point> theorem1_check(const RegressionDataset& data,
                                          const std::vector<Index>& h_values,
                                          const PriorSpec& spec,
                                          Activation activation,
                                          std::uint64_t seed);

bool strictly_decreasing(const std::vector<Theorem1Point>& points);

}  // namespace anchored
