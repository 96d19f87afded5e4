#include "anchored/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace anchored {

namespace fs = std::filesystem;
using nlohmann::json;

void PriorSpec::validate() const {
  if (!(first_layer_var > 0.0) || !(bias_var > 0.0) ||
      !(output_layer_var_base > 0.0) || !(center_var > 0.0))
    throw std::invalid_argument("prior variances must be positive");
}

DiagonalGaussian materialize_prior(const NetworkShape& shape,
                                   const PriorSpec& spec) {
  shape.validate();
  spec.validate();
  const Index p = shape.param_count();
  VectorXd var(p);
  const double first = shape.activation == Activation::rbf
                           ? spec.center_var
                           : spec.first_layer_var;
  var.segment(shape.first_weights_offset(), shape.first_weights_count())
      .setConstant(first);
  var.segment(shape.first_bias_offset(), shape.first_bias_count())
      .setConstant(spec.bias_var);
  var.segment(shape.output_weights_offset(), shape.hidden_width)
      .setConstant(spec.output_layer_var_base /
                   static_cast<double>(shape.hidden_width));
  var(shape.output_bias_offset()) = spec.bias_var;
  return {VectorXd::Zero(p), var};
}

namespace {

AnchoredMember make_member(const NetworkShape& shape,
                           const DiagonalGaussian& prior, double sigma_eps_sq,
                           std::uint64_t seed) {
  AnchoredMember m;
  m.seed = seed;
  m.anchor = sample_gaussian(prior, seed, 1).row(0).transpose();
  m.gamma = sigma_eps_sq * prior.var.cwiseInverse();
  m.params = NetworkParams(shape, m.anchor);
  return m;
}

}  // namespace

Ensemble build_ensemble(Index m, const NetworkShape& shape,
                        const PriorSpec& spec, double sigma_eps_sq,
                        std::uint64_t base_seed) {
  if (m < 1) throw std::invalid_argument("ensemble needs at least one member");
  if (!(sigma_eps_sq > 0.0))
    throw std::invalid_argument("sigma_eps_sq must be positive");
  const DiagonalGaussian prior = materialize_prior(shape, spec);
  Ensemble e{shape, spec, sigma_eps_sq, {}};
  e.members.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i)
    e.members.push_back(make_member(shape, prior, sigma_eps_sq,
                                    base_seed + static_cast<std::uint64_t>(i)));
  return e;
}

void train_ensemble(Ensemble& ensemble, const RegressionDataset& data,
                    const TrainConfig& config, int threads) {
  auto& members = ensemble.members;
  if (members.empty()) throw std::invalid_argument("ensemble is empty");
  config.validate();

  const std::size_t n = members.size();
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        auto& m = members[i];
        m.params = train(m.params, m.anchor, m.gamma, data, config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(workers, n); ++t)
      pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const DivergenceError& e) {
      throw DivergenceError("member " + std::to_string(i) + ": " + e.what(),
                            e.epoch());
    } catch (const std::exception& e) {
      throw std::runtime_error("member " + std::to_string(i) + ": " + e.what());
    }
  }
}

std::vector<PredictiveDist> predict(const Ensemble& ensemble,
                                    const MatrixXd& x_query) {
  const auto& members = ensemble.members;
  if (members.empty()) throw std::invalid_argument("ensemble is empty");
  if (x_query.rows() < 1) throw std::invalid_argument("no query points");

  const Index q = x_query.rows();
  const auto m = static_cast<Index>(members.size());
  MatrixXd out(q, m);
  for (Index j = 0; j < m; ++j)
    out.col(j) = forward_batch(members[static_cast<std::size_t>(j)].params,
                               x_query);

  std::vector<PredictiveDist> result(static_cast<std::size_t>(q));
  for (Index i = 0; i < q; ++i) {
    const double mean = out.row(i).mean();
    double var = 0.0;
    if (m > 1)
      var = (out.row(i).array() - mean).square().sum() /
            static_cast<double>(m - 1);
    result[static_cast<std::size_t>(i)] = {mean, var, ensemble.sigma_eps_sq};
  }
  return result;
}

namespace {

std::string member_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%03zu.params", i);
  return buf;
}

}  // namespace

void save_ensemble(const std::string& dir, const Ensemble& ensemble) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "anchored-ensemble";
  manifest["version"] = 1;
  const auto& s = ensemble.shape;
  manifest["shape"] = {{"activation", std::string(to_string(s.activation))},
                       {"input_dim", s.input_dim},
                       {"hidden_width", s.hidden_width},
                       {"rbf_width", s.rbf_width}};
  const auto& p = ensemble.prior;
  manifest["prior"] = {{"first_layer_var", p.first_layer_var},
                       {"bias_var", p.bias_var},
                       {"output_layer_var_base", p.output_layer_var_base},
                       {"center_var", p.center_var}};
  manifest["sigma_eps_sq"] = ensemble.sigma_eps_sq;
  json members = json::array();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    const auto file = member_file(i);
    save_params((fs::path(dir) / file).string(), ensemble.members[i].params);
    members.push_back({{"file", file}, {"seed", ensemble.members[i].seed}});
  }
  manifest["members"] = members;
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Ensemble load_ensemble(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw std::runtime_error("cannot read manifest in " + dir);
  const json manifest = json::parse(is);
  if (manifest.value("format", "") != "anchored-ensemble")
    throw std::runtime_error(dir + ": not an ensemble manifest");

  Ensemble e;
  const auto& s = manifest.at("shape");
  e.shape.activation = parse_activation(s.at("activation").get<std::string>());
  e.shape.input_dim = s.at("input_dim").get<Index>();
  e.shape.hidden_width = s.at("hidden_width").get<Index>();
  e.shape.rbf_width = s.at("rbf_width").get<double>();
  const auto& p = manifest.at("prior");
  e.prior.first_layer_var = p.at("first_layer_var").get<double>();
  e.prior.bias_var = p.at("bias_var").get<double>();
  e.prior.output_layer_var_base = p.at("output_layer_var_base").get<double>();
  e.prior.center_var = p.at("center_var").get<double>();
  e.sigma_eps_sq = manifest.at("sigma_eps_sq").get<double>();

  const DiagonalGaussian prior = materialize_prior(e.shape, e.prior);
  for (const auto& entry : manifest.at("members")) {
    AnchoredMember m = make_member(e.shape, prior, e.sigma_eps_sq,
                                   entry.at("seed").get<std::uint64_t>());
    m.params = load_params(
        (fs::path(dir) / entry.at("file").get<std::string>()).string());
    if (!(m.params.shape == e.shape))
      throw std::runtime_error(dir + ": member shape differs from manifest");
    e.members.push_back(std::move(m));
  }
  return e;
}

}  // namespace anchored
