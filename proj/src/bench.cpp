#include "anchored/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

namespace anchored {

namespace {

std::string trim(std::string_view s) {
  const auto is_junk = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '"' || c == '\'';
  };
  while (!s.empty() && is_junk(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_junk(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  if (line.find(',') != std::string::npos) {
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
  } else {
    std::istringstream is(line);
    std::string cell;
    while (is >> cell) cells.push_back(trim(cell));
  }
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) return std::nullopt;
  return v;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

RegressionDataset take_rows(const RegressionDataset& data,
                            const std::vector<Index>& rows) {
  RegressionDataset out;
  out.name = data.name;
  out.sigma_eps_sq = data.sigma_eps_sq;
  out.norm = data.norm;
  out.x.resize(static_cast<Index>(rows.size()), data.x.cols());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Index>(i)) = data.x.row(rows[i]);
    out.y(static_cast<Index>(i)) = data.y(rows[i]);
  }
  return out;
}

}  // namespace

RegressionDataset load_csv(const std::string& path,
                           const std::string& target_column) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);

  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto cells = split_line(line);
    std::vector<double> values;
    values.reserve(cells.size());
    std::optional<std::size_t> bad;
    bool any_number = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      any_number = any_number || v.has_value();
      if (!v || !std::isfinite(*v)) {
        if (!bad) bad = c;
        values.push_back(0.0);
      } else {
        values.push_back(*v);
      }
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << width << " columns, got "
         << cells.size();
      throw std::runtime_error(os.str());
    }
    if (bad) {
      if (rows.empty() && header.empty() && !any_number) {
        header = cells;
        continue;
      }
      std::ostringstream os;
      os << path << ": row " << line_no << ", column " << (*bad + 1)
         << ": non-numeric or non-finite cell '" << cells[*bad] << "'";
      throw std::runtime_error(os.str());
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  std::optional<std::size_t> target;
  if (!header.empty()) {
    const auto it = std::find(header.begin(), header.end(), target_column);
    if (it != header.end())
      target = static_cast<std::size_t>(it - header.begin());
  }
  if (!target) {
    const auto idx = parse_number(target_column);
    if (idx && *idx == std::floor(*idx)) {
      const long i = static_cast<long>(*idx);
      const long w = static_cast<long>(width);
      if (i >= -w && i < w) target = static_cast<std::size_t>(i < 0 ? i + w : i);
    }
  }
  if (!target)
    throw std::runtime_error(path + ": target column '" + target_column +
                             "' not found");
  if (width < 2) throw std::runtime_error(path + ": need at least two columns");

  RegressionDataset out;
  out.name = path;
  const auto n = static_cast<Index>(rows.size());
  out.x.resize(n, static_cast<Index>(width - 1));
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    Index col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == *target)
        out.y(i) = r[c];
      else
        out.x(i, col++) = r[c];
    }
  }
  return out;
}

NormStats compute_norm(const RegressionDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  NormStats s;
  const double n = static_cast<double>(data.size());
  s.feature_mean = data.x.colwise().mean().transpose();
  s.feature_std =
      ((data.x.rowwise() - s.feature_mean.transpose()).colwise().squaredNorm() /
       n)
          .cwiseSqrt()
          .transpose();
  s.target_mean = data.y.mean();
  s.target_std = std::sqrt((data.y.array() - s.target_mean).square().sum() / n);
  if (!(s.target_std > 0.0))
    throw std::invalid_argument("target is constant; cannot standardise");
  return s;
}

RegressionDataset apply_norm(const RegressionDataset& data,
                             const NormStats& stats) {
  if (data.norm) throw std::logic_error("dataset is already normalised");
  if (stats.feature_mean.size() != data.x.cols())
    throw std::invalid_argument("normalisation stats do not match features");
  RegressionDataset out = data;
  for (Index c = 0; c < out.x.cols(); ++c) {
    const double sd = stats.feature_std(c);
    if (sd > 0.0)
      out.x.col(c) = (out.x.col(c).array() - stats.feature_mean(c)) / sd;
    else
      out.x.col(c).setZero();
  }
  out.y = (out.y.array() - stats.target_mean) / stats.target_std;
  out.norm = stats;
  return out;
}

RegressionDataset normalize(const RegressionDataset& data) {
  if (data.norm) throw std::logic_error("dataset is already normalised");
  return apply_norm(data, compute_norm(data));
}

double denormalize_target(double value, const NormStats& stats) {
  return value * stats.target_std + stats.target_mean;
}

PredictiveDist denormalize(const PredictiveDist& d, const NormStats& stats) {
  const double s2 = stats.target_std * stats.target_std;
  return {denormalize_target(d.mean, stats), d.epistemic_var * s2,
          d.aleatoric_var * s2};
}

std::vector<Index> split_indices(Index n, double train_fraction,
                                 std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  if (n < 2) throw std::invalid_argument("need at least two rows to split");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::clamp<Index>(
      static_cast<Index>(std::llround(train_fraction * static_cast<double>(n))),
      1, n - 1);
  order.resize(static_cast<std::size_t>(n_train));
  std::sort(order.begin(), order.end());
  return order;
}

std::pair<RegressionDataset, RegressionDataset> split(
    const RegressionDataset& data, double train_fraction, std::uint64_t seed) {
  const auto train = split_indices(data.size(), train_fraction, seed);
  std::vector<Index> test;
  test.reserve(static_cast<std::size_t>(data.size()) - train.size());
  std::size_t k = 0;
  for (Index i = 0; i < data.size(); ++i) {
    if (k < train.size() && train[k] == i)
      ++k;
    else
      test.push_back(i);
  }
  return {take_rows(data, train), take_rows(data, test)};
}

double rmse(const VectorXd& predictions, const VectorXd& targets) {
  if (predictions.size() != targets.size() || targets.size() == 0)
    throw std::invalid_argument("rmse: length mismatch or empty input");
  return std::sqrt((predictions - targets).squaredNorm() /
                   static_cast<double>(targets.size()));
}

double gaussian_nll(const std::vector<PredictiveDist>& dists,
                    const VectorXd& targets) {
  if (dists.size() != static_cast<std::size_t>(targets.size()) ||
      dists.empty())
    throw std::invalid_argument("nll: length mismatch or empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const double var = dists[i].total_var();
    if (!(var > 0.0))
      throw std::invalid_argument("nll: predictive variance must be positive");
    const double r = targets(static_cast<Index>(i)) - dists[i].mean;
    total += 0.5 * std::log(2.0 * std::numbers::pi * var) + r * r / (2.0 * var);
  }
  return total / static_cast<double>(dists.size());
}

MeanStderr mean_stderr(const std::vector<double>& values) {
  MeanStderr out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

MetricReport run_benchmark(const RegressionDataset& raw,
                           const BenchConfig& config) {
  if (config.splits < 1) throw std::invalid_argument("need at least one split");
  MetricReport report;
  report.dataset = raw.name;

  NetworkShape shape;
  shape.input_dim = raw.input_dim();
  shape.hidden_width = config.hidden_width;
  shape.activation = config.activation;
  PriorSpec prior = config.prior;
  if (config.scale_first_layer_by_inputs)
    prior.first_layer_var /= static_cast<double>(raw.input_dim());

  std::vector<double> rmses, nlls;
  for (int s = 0; s < config.splits; ++s) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t split_seed =
        config.seed + 1000003ULL * static_cast<std::uint64_t>(s);
    const auto [train_raw, test_raw] =
        split(raw, config.train_fraction, split_seed);
    const NormStats stats = compute_norm(train_raw);
    const RegressionDataset train = apply_norm(train_raw, stats);
    const RegressionDataset test = apply_norm(test_raw, stats);

    Ensemble ens = build_ensemble(config.members, shape, prior,
                                  raw.sigma_eps_sq, split_seed + 17);
    train_ensemble(ens, train, config.train, config.threads);

    std::vector<PredictiveDist> pred = predict(ens, test.x);
    VectorXd means(test_raw.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = denormalize(pred[i], stats);
      means(static_cast<Index>(i)) = pred[i].mean;
    }
    SplitResult r;
    r.split = s;
    r.rmse = rmse(means, test_raw.y);
    r.nll = gaussian_nll(pred, test_raw.y);
    r.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    rmses.push_back(r.rmse);
    nlls.push_back(r.nll);
    report.splits.push_back(r);
  }
  report.rmse = mean_stderr(rmses);
  report.nll = mean_stderr(nlls);
  return report;
}

RegressionDataset make_linear_dataset(Index n, Index d, double noise_var,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  RegressionDataset out;
  out.name = "synthetic-linear";
  out.sigma_eps_sq = noise_var;
  VectorXd w(d);
  for (Index j = 0; j < d; ++j) w(j) = normal(rng);
  out.x.resize(n, d);
  out.y.resize(n);
  const double sd = std::sqrt(noise_var);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) out.x(i, j) = normal(rng);
    out.y(i) = out.x.row(i).dot(w) + sd * normal(rng);
  }
  return out;
}

double prior_dominance_ratio(const MatrixXd& features,
                             const VectorXd& prior_var, double noise_var) {
  if (features.cols() != prior_var.size())
    throw std::invalid_argument("one prior variance per feature column needed");
  if (!(noise_var > 0.0))
    throw std::invalid_argument("noise variance must be positive");
  if (features.rows() == 0 || !features.allFinite())
    throw NumericalError("feature matrix is empty or non-finite");
  const VectorXd col_sq = features.colwise().squaredNorm().transpose();
  if (!(col_sq.maxCoeff() > 0.0))
    throw NumericalError("feature matrix is identically zero");
  const double h = static_cast<double>(features.cols() - 1);
  return prior_var.cwiseAbs2().dot(col_sq) / noise_var / std::max(h, 1.0);
}

std::vector<Theorem1Point> theorem1_check(const RegressionDataset& data,
                                          const std::vector<Index>& h_values,
                                          const PriorSpec& spec,
                                          Activation activation,
                                          std::uint64_t seed) {
  if (data.size() < 2) throw std::invalid_argument("need at least two rows");
  for (std::size_t i = 1; i < h_values.size(); ++i)
    if (h_values[i] <= h_values[i - 1])
      throw std::invalid_argument("widths must be increasing");

  std::vector<Theorem1Point> out;
  for (std::size_t i = 0; i < h_values.size(); ++i) {
    NetworkShape shape;
    shape.input_dim = data.input_dim();
    shape.hidden_width = h_values[i];
    shape.activation = activation;
    const DiagonalGaussian prior = materialize_prior(shape, spec);
    const NetworkParams net(
        shape, sample_gaussian(prior, seed + i, 1).row(0).transpose());

    const Index h = shape.hidden_width;
    MatrixXd phi(data.size(), h + 1);
    phi.leftCols(h) = hidden_features(net, data.x);
    phi.col(h).setOnes();
    const VectorXd out_var =
        prior.var.segment(shape.output_weights_offset(), h + 1);
    out.push_back({h, prior_dominance_ratio(phi, out_var, data.sigma_eps_sq)});
  }
  return out;
}

bool strictly_decreasing(const std::vector<Theorem1Point>& points) {
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].trace_ratio < points[i - 1].trace_ratio)) return false;
  return true;
}

}  // namespace anchored
