#include "anchored/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace anchored {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Toy-problem gates.
constexpr double kCoverageFloor = 0.9;
constexpr double kFarEnsembleMean = 0.1;
constexpr double kFarGpMean = 0.01;
constexpr double kFarVarianceBand = 0.3;

// Oracle-check gates.
constexpr double kAnalyticTolerance = 1e-8;
constexpr double kMonteCarloTolerance = 0.02;
constexpr int kMonteCarloPairs = 5;

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

void write_report(const RunConfig& c, const std::string& command,
                  json body) {
  json report;
  report["command"] = command;
  report["config_hash"] = config_hash(c);
  json cfg = to_json(c);
  for (const char* key : {"out", "curves", "threads"}) cfg.erase(key);
  report["config"] = std::move(cfg);
  report["result"] = std::move(body);
  const std::string path = c.out.empty() ? command + "_report.json" : c.out;
  if (const auto parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write report " + path);
  os << report.dump(2) << "\n";
}

MatrixXd random_spd(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  MatrixXd b(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) b(i, j) = normal(rng);
  MatrixXd s = b * b.transpose() / static_cast<double>(d);
  s.diagonal().array() += 0.5;
  return symmetrized(s);
}

VectorXd random_vector(Index d, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> normal(0.0, sd);
  VectorXd v(d);
  for (Index i = 0; i < d; ++i) v(i) = normal(rng);
  return v;
}

struct MomentErrors {
  double mean_error;
  double cov_error;
  double variance_ratio;
};

MomentErrors monte_carlo_moments(const GaussianDist& prior,
                                 const GaussianDist& like,
                                 const GaussianDist& anchors, Index n,
                                 std::uint64_t seed) {
  const GaussianDist post = gaussian_posterior(prior, like);
  const MatrixXd a = anchor_map_matrix(prior, like);
  const VectorXd offset =
      map_with_anchor(prior, like, VectorXd::Zero(prior.dim()));
  const MatrixXd theta0 = sample_gaussian(anchors, seed, n);
  MatrixXd maps = theta0 * a.transpose();
  maps.rowwise() += offset.transpose();

  const VectorXd mean = maps.colwise().mean().transpose();
  const MatrixXd centred = maps.rowwise() - mean.transpose();
  const MatrixXd cov =
      centred.transpose() * centred / static_cast<double>(n - 1);
  const double scale =
      std::max(post.mean.norm(), std::sqrt(post.cov.trace()));
  return {(mean - post.mean).norm() / scale,
          (cov - post.cov).norm() / post.cov.norm(),
          cov.trace() / post.cov.trace()};
}

}  // namespace

RunConfig defaults_for(std::string_view command) {
  RunConfig c;
  if (command == "benchmark") {
    c.hidden_width = 50;
    c.members = 5;
    c.epochs = 2000;
  }
  return c;
}

json to_json(const RunConfig& c) {
  json j;
  j["activation"] = c.activation;
  j["hidden_width"] = c.hidden_width;
  j["members"] = c.members;
  j["first_layer_var"] = c.prior.first_layer_var;
  j["bias_var"] = c.prior.bias_var;
  j["output_layer_var_base"] = c.prior.output_layer_var_base;
  j["center_var"] = c.prior.center_var;
  j["rbf_width"] = c.rbf_width;
  j["sigma_eps_sq"] = c.sigma_eps_sq ? json(*c.sigma_eps_sq) : json(nullptr);
  j["seed"] = c.seed;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = c.optimizer;
  j["early_stop_tol"] = c.early_stop_tol;
  j["out"] = c.out;
  j["threads"] = c.threads;
  j["curves"] = c.curves;
  j["grid_points"] = c.grid_points;
  j["grid_halfwidth"] =
      c.grid_halfwidth ? json(*c.grid_halfwidth) : json(nullptr);
  j["dataset"] = c.dataset;
  j["manifest"] = c.manifest;
  j["splits"] = c.splits;
  j["train_fraction"] = c.train_fraction;
  j["h_values"] = c.h_values;
  j["seeds"] = c.seeds;
  j["pairs"] = c.pairs;
  j["anchors"] = c.anchors;
  j["inject_prior_anchor"] = c.inject_prior_anchor;
  j["instances"] = c.instances;
  return j;
}

void merge_config(RunConfig& c, const json& j) {
  if (!j.is_object())
    throw std::invalid_argument("config file must contain a JSON object");
  const json known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      throw std::invalid_argument("unknown config key '" + key + "'");

  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  auto take_opt = [&](const char* key, std::optional<double>& field) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null())
      field.reset();
    else
      field = j.at(key).get<double>();
  };
  take("activation", c.activation);
  take("hidden_width", c.hidden_width);
  take("members", c.members);
  take("first_layer_var", c.prior.first_layer_var);
  take("bias_var", c.prior.bias_var);
  take("output_layer_var_base", c.prior.output_layer_var_base);
  take("center_var", c.prior.center_var);
  take("rbf_width", c.rbf_width);
  take_opt("sigma_eps_sq", c.sigma_eps_sq);
  take("seed", c.seed);
  take("epochs", c.epochs);
  take("learning_rate", c.learning_rate);
  take("optimizer", c.optimizer);
  take("early_stop_tol", c.early_stop_tol);
  take("out", c.out);
  take("threads", c.threads);
  take("curves", c.curves);
  take("grid_points", c.grid_points);
  take_opt("grid_halfwidth", c.grid_halfwidth);
  take("dataset", c.dataset);
  take("manifest", c.manifest);
  take("splits", c.splits);
  take("train_fraction", c.train_fraction);
  take("h_values", c.h_values);
  take("seeds", c.seeds);
  take("pairs", c.pairs);
  take("anchors", c.anchors);
  take("inject_prior_anchor", c.inject_prior_anchor);
  take("instances", c.instances);
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out");
  j.erase("curves");
  j.erase("threads");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.epochs = c.epochs;
  t.early_stop_tol = c.early_stop_tol;
  if (c.optimizer == "adam")
    t.optimizer = Optimizer::adaptive_moment;
  else if (c.optimizer == "gd")
    t.optimizer = Optimizer::gradient_descent;
  else
    throw std::invalid_argument("optimizer must be 'adam' or 'gd'");
  t.validate();
  return t;
}

// ---- oracle-check --------------------------------------------------------

OracleCheckResult run_oracle_check(const RunConfig& c) {
  if (c.pairs < 1) throw std::invalid_argument("pairs must be >= 1");
  if (c.anchors < 2) throw std::invalid_argument("anchors must be >= 2");

  OracleCheckResult r;
  r.pairs = c.pairs;
  r.injected_prior_anchor = c.inject_prior_anchor;
  std::mt19937_64 rng(c.seed);
  // The injected-fault run uses a sharp likelihood, where the exact anchor
  // covariance is far above the prior's.
  const double like_scale = c.inject_prior_anchor ? 0.05 : 1.0;

  for (int i = 0; i < c.pairs; ++i) {
    const Index d = 1 + i % 5;
    const GaussianDist prior{random_vector(d, rng, 2.0), random_spd(d, rng)};
    const GaussianDist like{random_vector(d, rng, 2.0),
                            like_scale * random_spd(d, rng)};
    const GaussianDist post = gaussian_posterior(prior, like);
    const GaussianDist anchors = anchor_distribution(prior, like);
    const MatrixXd a = anchor_map_matrix(prior, like);
    const double err = (a * anchors.cov * a.transpose() - post.cov).norm() /
                       post.cov.norm();
    r.max_analytic_error = std::max(r.max_analytic_error, err);

    if (i < kMonteCarloPairs) {
      const GaussianDist& used = c.inject_prior_anchor ? prior : anchors;
      const MomentErrors mc = monte_carlo_moments(
          prior, like, used, c.anchors, c.seed + 7919 * (i + 1));
      r.mc_mean_error = std::max(r.mc_mean_error, mc.mean_error);
      if (mc.cov_error >= r.mc_cov_error) {
        r.mc_cov_error = mc.cov_error;
        r.mc_variance_ratio = mc.variance_ratio;
      }
    }
  }
  r.passed = r.max_analytic_error < kAnalyticTolerance &&
             r.mc_mean_error < kMonteCarloTolerance &&
             r.mc_cov_error < kMonteCarloTolerance;
  return r;
}

int cmd_oracle_check(const RunConfig& c, std::ostream& log) {
  const OracleCheckResult r = run_oracle_check(c);
  json body{{"pairs", r.pairs},
            {"max_analytic_error", r.max_analytic_error},
            {"analytic_tolerance", kAnalyticTolerance},
            {"monte_carlo_pairs", std::min(c.pairs, kMonteCarloPairs)},
            {"anchors", c.anchors},
            {"mc_mean_error", r.mc_mean_error},
            {"mc_cov_error", r.mc_cov_error},
            {"mc_variance_ratio", r.mc_variance_ratio},
            {"mc_tolerance", kMonteCarloTolerance},
            {"injected_prior_anchor", r.injected_prior_anchor},
            {"passed", r.passed}};
  write_report(c, "oracle-check", body);

  log << "oracle-check  pairs=" << r.pairs << "  anchors=" << c.anchors
      << (r.injected_prior_anchor ? "  [anchor cov = prior cov]" : "") << "\n"
      << "  analytic |A S0 A^T - S_post|/|S_post|  max " << fmt(r.max_analytic_error)
      << "  (tol " << kAnalyticTolerance << ")\n"
      << "  Monte-Carlo mean error                 " << fmt(r.mc_mean_error)
      << "  (tol " << kMonteCarloTolerance << ")\n"
      << "  Monte-Carlo covariance error           " << fmt(r.mc_cov_error)
      << "  (tol " << kMonteCarloTolerance << ")\n"
      << "  Var[MAP] / Var[posterior] (trace)      " << fmt(r.mc_variance_ratio)
      << "\n"
      << (r.passed ? "PASS" : "FAIL") << "\n";
  if (!r.passed && r.mc_variance_ratio < 1.0 - kMonteCarloTolerance)
    log << "  posterior variance underestimated by "
        << fmt(100.0 * (1.0 - r.mc_variance_ratio), 3) << "%\n";
  return r.passed ? 0 : 1;
}

// ---- toy -----------------------------------------------------------------

RegressionDataset make_toy_dataset(std::uint64_t seed) {
  constexpr double kNoiseSd = 0.05;
  constexpr int kPerCluster = 6;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, kNoiseSd);
  RegressionDataset d;
  d.name = "toy";
  d.sigma_eps_sq = kNoiseSd * kNoiseSd;
  d.x.resize(2 * kPerCluster, 1);
  d.y.resize(2 * kPerCluster);
  const double lo[2] = {-2.0, 0.7};
  const double hi[2] = {-0.5, 2.0};
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < kPerCluster; ++i) {
      const int row = c * kPerCluster + i;
      const double x = lo[c] + (hi[c] - lo[c]) * i / (kPerCluster - 1);
      d.x(row, 0) = x;
      d.y(row) = std::sin(2.0 * x) + noise(rng);
    }
  return d;
}

ToyResult run_toy(const RunConfig& c) {
  ToyResult r;
  r.data = make_toy_dataset(c.seed);
  if (c.sigma_eps_sq) r.data.sigma_eps_sq = *c.sigma_eps_sq;
  r.data_radius = r.data.x.cwiseAbs().maxCoeff();

  NetworkShape shape;
  shape.input_dim = 1;
  shape.hidden_width = c.hidden_width;
  shape.activation = parse_activation(c.activation);
  shape.rbf_width = c.rbf_width;
  if (shape.activation == Activation::linear)
    throw std::invalid_argument("toy needs relu, erf or rbf");

  const double half = c.grid_halfwidth.value_or(
      shape.activation == Activation::rbf ? 10.0 * r.data_radius
                                          : 2.0 * r.data_radius);
  if (c.grid_points < 2) throw std::invalid_argument("grid_points must be >= 2");
  r.grid = VectorXd::LinSpaced(c.grid_points, -half, half);
  const MatrixXd xq = r.grid;

  Ensemble ens = build_ensemble(c.members, shape, c.prior,
                                r.data.sigma_eps_sq, c.seed + 1);
  train_ensemble(ens, r.data, train_config(c), c.threads);
  r.ensemble = predict(ens, xq);

  const KernelSpec kernel = kernel_for(shape, c.prior);
  const GPPosterior gp = gp_fit(r.data.x, r.data.y, kernel, r.data.sigma_eps_sq);
  r.gp = gp_predict(gp, xq);

  int covered = 0;
  for (std::size_t i = 0; i < r.gp.size(); ++i) {
    const double sd = std::sqrt(r.ensemble[i].total_var());
    if (std::abs(r.gp[i].mean - r.ensemble[i].mean) <= 2.0 * sd) ++covered;
  }
  r.coverage = static_cast<double>(covered) / static_cast<double>(r.gp.size());

  // Far field: the grid edge farther out, or 10 data radii when the grid is
  // narrower than that.
  r.far_x = std::max(half, 10.0 * r.data_radius);
  MatrixXd far(2, 1);
  far << -r.far_x, r.far_x;
  const auto ens_far = predict(ens, far);
  const auto gp_far = gp_predict(gp, far);
  for (int i = 0; i < 2; ++i) {
    if (std::abs(ens_far[i].mean) >= std::abs(r.far_ensemble_mean))
      r.far_ensemble_mean = ens_far[i].mean;
    if (std::abs(gp_far[i].mean) >= std::abs(r.far_gp_mean))
      r.far_gp_mean = gp_far[i].mean;
    r.far_ensemble_epistemic =
        std::max(r.far_ensemble_epistemic, ens_far[i].epistemic_var);
    r.far_gp_var = std::max(r.far_gp_var, gp_far[i].epistemic_var);
  }
  const VectorXd fx = VectorXd::Constant(1, r.far_x);
  r.far_prior_var = kernel_eval(kernel, fx, fx);

  r.far_variance_ok = std::abs(r.far_ensemble_epistemic - r.far_prior_var) <=
                      kFarVarianceBand * r.far_prior_var;
  if (shape.activation == Activation::rbf) {
    r.passed = std::abs(r.far_ensemble_mean) < kFarEnsembleMean &&
               std::abs(r.far_gp_mean) < kFarGpMean;
  } else {
    r.passed = r.coverage >= kCoverageFloor;
  }
  return r;
}

void write_toy_curves(std::ostream& os, const ToyResult& r) {
  os << "x,ens_mean,ens_lower,ens_upper,ens_epistemic_var,ens_total_var,"
        "gp_mean,gp_lower,gp_upper,gp_latent_var,gp_total_var\n";
  os << std::setprecision(17);
  for (Index i = 0; i < r.grid.size(); ++i) {
    const auto& e = r.ensemble[static_cast<std::size_t>(i)];
    const auto& g = r.gp[static_cast<std::size_t>(i)];
    const double es = 2.0 * std::sqrt(e.total_var());
    const double gs = 2.0 * std::sqrt(g.total_var());
    os << r.grid(i) << "," << e.mean << "," << e.mean - es << ","
       << e.mean + es << "," << e.epistemic_var << "," << e.total_var() << ","
       << g.mean << "," << g.mean - gs << "," << g.mean + gs << ","
       << g.epistemic_var << "," << g.total_var() << "\n";
  }
}

int cmd_toy(const RunConfig& c, std::ostream& log) {
  const ToyResult r = run_toy(c);

  std::string curves = c.curves;
  if (curves.empty()) {
    fs::path p = c.out.empty() ? fs::path("toy_report.json") : fs::path(c.out);
    curves = p.replace_extension(".csv").string();
  }
  {
    if (const auto parent = fs::path(curves).parent_path(); !parent.empty())
      fs::create_directories(parent);
    std::ofstream os(curves);
    if (!os) throw std::runtime_error("cannot write " + curves);
    write_toy_curves(os, r);
  }

  json data = json::array();
  for (Index i = 0; i < r.data.size(); ++i)
    data.push_back({r.data.x(i, 0), r.data.y(i)});
  json body{{"activation", c.activation},
            {"data", data},
            {"sigma_eps_sq", r.data.sigma_eps_sq},
            {"coverage", r.coverage},
            {"coverage_floor", kCoverageFloor},
            {"far_x", r.far_x},
            {"far_ensemble_mean", r.far_ensemble_mean},
            {"far_ensemble_epistemic_var", r.far_ensemble_epistemic},
            {"far_gp_mean", r.far_gp_mean},
            {"far_gp_var", r.far_gp_var},
            {"far_prior_var", r.far_prior_var},
            {"far_variance_within_band", r.far_variance_ok},
            {"passed", r.passed}};
  write_report(c, "toy", body);

  log << "toy  activation=" << c.activation << "  H=" << c.hidden_width
      << "  m=" << c.members << "\n"
      << "  GP mean inside ensemble +-2sd band: " << fmt(100.0 * r.coverage, 4)
      << "% of " << r.grid.size() << " grid points\n"
      << "  at |x| = " << fmt(r.far_x) << ": ensemble mean "
      << fmt(r.far_ensemble_mean) << ", GP mean " << fmt(r.far_gp_mean)
      << "\n  epistemic var: ensemble " << fmt(r.far_ensemble_epistemic)
      << ", GP posterior " << fmt(r.far_gp_var) << ", prior k(x,x) "
      << fmt(r.far_prior_var) << "\n"
      << "  curves written to " << curves << "\n"
      << (r.passed ? "PASS" : "FAIL") << "\n";
  return r.passed ? 0 : 1;
}

// ---- gradcheck -----------------------------------------------------------

std::vector<GradcheckRow> run_gradcheck(int instances, std::uint64_t seed) {
  constexpr double kStep = 1e-5;
  std::vector<GradcheckRow> rows;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> dim(1, 3), width(2, 6), count(3, 8);
  std::uniform_real_distribution<double> reg(0.1, 2.0);

  for (Activation act : {Activation::relu, Activation::erf, Activation::rbf}) {
    GradcheckRow row{act, instances, 0.0};
    for (int k = 0; k < instances; ++k) {
      NetworkShape shape;
      shape.activation = act;
      shape.input_dim = dim(rng);
      shape.hidden_width = width(rng);
      shape.rbf_width = 0.5 + reg(rng);
      const Index p = shape.param_count();
      RegressionDataset data;
      const Index n = count(rng);
      data.x.resize(n, shape.input_dim);
      data.y.resize(n);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < shape.input_dim; ++j) data.x(i, j) = normal(rng);
        data.y(i) = normal(rng);
      }
      VectorXd theta(p), theta0(p), gamma(p);
      for (Index i = 0; i < p; ++i) {
        theta(i) = normal(rng);
        theta0(i) = normal(rng);
        gamma(i) = reg(rng);
      }
      NetworkParams params(shape, theta);
      const VectorXd analytic = grad(params, theta0, gamma, data);
      for (Index i = 0; i < p; ++i) {
        NetworkParams hi = params, lo = params;
        hi.theta(i) += kStep;
        lo.theta(i) -= kStep;
        const double fd = (anchored_loss(hi, theta0, gamma, data) -
                           anchored_loss(lo, theta0, gamma, data)) /
                          (2.0 * kStep);
        const double denom =
            std::max({std::abs(fd), std::abs(analytic(i)), 1e-8});
        row.max_rel_error =
            std::max(row.max_rel_error, std::abs(fd - analytic(i)) / denom);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& log) {
  const auto rows = run_gradcheck(c.instances, c.seed);
  bool ok = true;
  json table = json::array();
  log << "gradcheck  central differences, step 1e-5, " << c.instances
      << " instances per activation\n";
  for (const auto& r : rows) {
    const bool pass = r.max_rel_error < kGradcheckTolerance;
    ok = ok && pass;
    table.push_back({{"activation", std::string(to_string(r.activation))},
                     {"instances", r.instances},
                     {"max_rel_error", r.max_rel_error},
                     {"passed", pass}});
    log << "  " << std::left << std::setw(6) << to_string(r.activation)
        << " max relative error " << fmt(r.max_rel_error, 3)
        << (pass ? "  ok" : "  FAIL") << "\n";
  }
  write_report(c, "gradcheck",
               {{"rows", table}, {"tolerance", kGradcheckTolerance},
                {"passed", ok}});
  log << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

// ---- theorem1 ------------------------------------------------------------

std::vector<Theorem1Row> run_theorem1(const RunConfig& c) {
  RegressionDataset data = make_linear_dataset(200, 2, 0.1, c.seed);
  if (c.sigma_eps_sq) data.sigma_eps_sq = *c.sigma_eps_sq;
  std::vector<Theorem1Row> rows;
  for (Activation act : {Activation::relu, Activation::erf}) {
    for (int s = 0; s < c.seeds; ++s) {
      Theorem1Row row;
      row.activation = act;
      row.seed = c.seed + static_cast<std::uint64_t>(s);
      row.points = theorem1_check(data, c.h_values, c.prior, act, row.seed);
      row.decreasing = strictly_decreasing(row.points);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

int cmd_theorem1(const RunConfig& c, std::ostream& log) {
  const auto rows = run_theorem1(c);
  json table = json::array();
  log << "theorem1  trace(S_prior^2 S_like^-1)/H on a 200-point synthetic set\n";
  bool ok = true;
  for (Activation act : {Activation::relu, Activation::erf}) {
    int decreasing = 0, total = 0;
    for (const auto& r : rows) {
      if (r.activation != act) continue;
      ++total;
      decreasing += r.decreasing ? 1 : 0;
      json pts = json::array();
      log << "  " << std::left << std::setw(5) << to_string(act) << " seed "
          << r.seed << ":";
      for (const auto& p : r.points) {
        pts.push_back({{"H", p.hidden_width}, {"trace_ratio", p.trace_ratio}});
        log << "  H=" << p.hidden_width << " " << fmt(p.trace_ratio, 4);
      }
      log << (r.decreasing ? "  decreasing" : "  NOT decreasing") << "\n";
      table.push_back({{"activation", std::string(to_string(act))},
                       {"seed", r.seed},
                       {"points", pts},
                       {"decreasing", r.decreasing}});
    }
    ok = ok && 2 * decreasing > total;
  }
  write_report(c, "theorem1", {{"rows", table}, {"passed", ok}});
  log << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

// ---- benchmark -----------------------------------------------------------

std::optional<double> default_noise_var(const std::string& dataset) {
  static const std::pair<const char*, double> table[] = {
      {"energy", 1e-7}, {"naval", 1e-7},  {"yacht", 1e-7},
      {"kin8nm", 0.02}, {"power", 0.05},  {"concrete", 0.05},
      {"boston", 0.08}, {"protein", 0.5}, {"wine", 0.5},
      {"song", 0.7},    {"synthetic", 0.01}};
  for (const auto& [name, v] : table)
    if (dataset == name) return v;
  return std::nullopt;
}

RegressionDataset load_dataset(const RunConfig& c) {
  if (c.dataset.empty()) throw std::invalid_argument("--dataset is required");
  RegressionDataset data;
  if (c.dataset == "synthetic") {
    data = make_linear_dataset(300, 4, *default_noise_var("synthetic"),
                               c.seed + 99);
    // The benchmark works in standardised target units.
    const double var_y = (data.y.array() - data.y.mean()).square().mean();
    data.sigma_eps_sq /= var_y;
  } else {
    std::string manifest_path = c.manifest;
    if (manifest_path.empty()) {
      const char* dir = std::getenv("ANCHORED_DATA_DIR");
      manifest_path = (fs::path(dir ? dir : "data") / "manifest.json").string();
    }
    std::ifstream is(manifest_path);
    if (!is) throw std::runtime_error("cannot open manifest " + manifest_path);
    const json manifest = json::parse(is);
    const json& sets = manifest.at("datasets");
    if (!sets.contains(c.dataset))
      throw std::runtime_error("dataset '" + c.dataset + "' not in " +
                               manifest_path);
    const json& entry = sets.at(c.dataset);
    fs::path file = entry.at("path").get<std::string>();
    if (file.is_relative()) file = fs::path(manifest_path).parent_path() / file;
    data = load_csv(file.string(), entry.at("target").get<std::string>());
    if (entry.contains("sigma_eps_sq"))
      data.sigma_eps_sq = entry.at("sigma_eps_sq").get<double>();
    else if (const auto v = default_noise_var(c.dataset))
      data.sigma_eps_sq = *v;
    else
      throw std::runtime_error("no sigma_eps_sq for dataset " + c.dataset);
  }
  data.name = c.dataset;
  if (c.sigma_eps_sq) data.sigma_eps_sq = *c.sigma_eps_sq;
  return data;
}

BenchConfig bench_config(const RunConfig& c) {
  BenchConfig b;
  b.activation = parse_activation(c.activation);
  b.hidden_width = c.hidden_width;
  b.members = c.members;
  b.prior = c.prior;
  b.train = train_config(c);
  b.splits = c.splits;
  b.train_fraction = c.train_fraction;
  b.seed = c.seed;
  b.threads = c.threads;
  return b;
}

int cmd_benchmark(const RunConfig& c, std::ostream& log) {
  const RegressionDataset data = load_dataset(c);
  const MetricReport report = run_benchmark(data, bench_config(c));
  const std::string hash = config_hash(c);

  json records = json::array();
  json timing = json::array();
  for (const auto& s : report.splits) {
    records.push_back({{"dataset", report.dataset},
                       {"split", s.split},
                       {"rmse", s.rmse},
                       {"nll", s.nll},
                       {"config_hash", hash}});
    timing.push_back({{"split", s.split}, {"seconds", s.seconds}});
  }
  json body{{"dataset", report.dataset},
            {"N", data.size()},
            {"D", data.input_dim()},
            {"sigma_eps_sq", data.sigma_eps_sq},
            {"records", records},
            {"rmse_mean", report.rmse.mean},
            {"rmse_stderr", report.rmse.stderr_},
            {"nll_mean", report.nll.mean},
            {"nll_stderr", report.nll.stderr_}};
  write_report(c, "benchmark", body);

  // Wall times vary run to run, so they go to a sidecar file and the log.
  const std::string report_path =
      c.out.empty() ? "benchmark_report.json" : c.out;
  std::ofstream(report_path + ".timing.json") << timing.dump(2) << "\n";

  log << "benchmark  " << report.dataset << "  N=" << data.size()
      << "  D=" << data.input_dim() << "  sigma_eps^2=" << data.sigma_eps_sq
      << "  m=" << c.members << "  H=" << c.hidden_width << "\n"
      << "  split      rmse       nll    seconds\n";
  for (const auto& s : report.splits)
    log << "  " << std::setw(5) << s.split << std::setw(10) << fmt(s.rmse, 4)
        << std::setw(10) << fmt(s.nll, 4) << std::setw(11) << fmt(s.seconds, 3)
        << "\n";
  log << "  RMSE " << fmt(report.rmse.mean, 4) << " +- "
      << fmt(report.rmse.stderr_, 2) << "   NLL " << fmt(report.nll.mean, 4)
      << " +- " << fmt(report.nll.stderr_, 2) << "\n";
  return 0;
}

}  // namespace anchored
