#include "anchored/network.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

namespace anchored {

namespace {

constexpr double kTwoOverSqrtPi = 2.0 * std::numbers::inv_sqrtpi;

void check_data(const NetworkParams& params, const RegressionDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  if (data.x.rows() != data.y.size())
    throw std::invalid_argument("dataset features and targets differ in length");
  if (data.x.cols() != params.shape.input_dim) {
    std::ostringstream os;
    os << "dataset has " << data.x.cols() << " inputs, network expects "
       << params.shape.input_dim;
    throw std::invalid_argument(os.str());
  }
}

void check_vectors(const NetworkParams& params, const VectorXd& theta0,
                   const VectorXd& gamma) {
  const Index p = params.shape.param_count();
  if (theta0.size() != p || gamma.size() != p)
    throw std::invalid_argument("anchor and regulariser must have length P");
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                Eigen::RowMajor>;

Eigen::Map<const RowMatrix> first_weights(const NetworkParams& p) {
  const auto& s = p.shape;
  const Index rows = s.activation == Activation::linear ? 0 : s.hidden_width;
  return {p.theta.data() + s.first_weights_offset(), rows, s.input_dim};
}

// Pre-activations (relu/erf) or squared distances to the centres (rbf).
MatrixXd hidden_inputs(const NetworkParams& p, const MatrixXd& x) {
  const auto& s = p.shape;
  const auto w = first_weights(p);
  switch (s.activation) {
    case Activation::relu:
    case Activation::erf: {
      MatrixXd z = x * w.transpose();
      z.rowwise() +=
          p.theta.segment(s.first_bias_offset(), s.hidden_width).transpose();
      return z;
    }
    case Activation::rbf: {
      const VectorXd xsq = x.rowwise().squaredNorm();
      const VectorXd usq = w.rowwise().squaredNorm();
      MatrixXd d = -2.0 * x * w.transpose();
      d.colwise() += xsq;
      d.rowwise() += usq.transpose();
      return d.cwiseMax(0.0);
    }
    case Activation::linear:
      return x;
  }
  return {};
}

MatrixXd activate(const NetworkShape& s, const MatrixXd& in) {
  switch (s.activation) {
    case Activation::relu:
      return in.cwiseMax(0.0);
    case Activation::erf:
      return in.unaryExpr([](double v) { return std::erf(v); });
    case Activation::rbf: {
      const double scale = -0.5 / s.rbf_width;
      return (in.array() * scale).exp().matrix();
    }
    case Activation::linear:
      return in;
  }
  return {};
}

struct Evaluation {
  double data_term;
  double reg_term;
  double loss() const { return data_term + reg_term; }
};

Evaluation evaluate(const NetworkParams& params, const VectorXd& theta0,
                    const VectorXd& gamma, const RegressionDataset& data,
                    VectorXd* gradient) {
  const auto& s = params.shape;
  const double n = static_cast<double>(data.size());
  const MatrixXd in = hidden_inputs(params, data.x);
  const MatrixXd act = activate(s, in);
  const auto w2 = params.theta.segment(s.output_weights_offset(), s.hidden_width);
  const double b2 = params.theta(s.output_bias_offset());

  const VectorXd resid = (act * w2).array() + b2 - data.y.array();
  const VectorXd diff = params.theta - theta0;
  const Evaluation ev{resid.squaredNorm() / n,
                      gamma.dot(diff.cwiseAbs2()) / n};
  if (!gradient) return ev;

  VectorXd& g = *gradient;
  g = (2.0 / n) * gamma.cwiseProduct(diff);
  const VectorXd dy = (2.0 / n) * resid;
  g.segment(s.output_weights_offset(), s.hidden_width) += act.transpose() * dy;
  g(s.output_bias_offset()) += dy.sum();
  if (s.activation == Activation::linear) return ev;

  const MatrixXd dact = dy * w2.transpose();  // N x H
  const Index wo = s.first_weights_offset();
  const Index h = s.hidden_width;
  const Index d = s.input_dim;
  Eigen::Map<RowMatrix> gw(g.data() + wo, h, d);

  switch (s.activation) {
    case Activation::relu:
    case Activation::erf: {
      MatrixXd dz;
      if (s.activation == Activation::relu) {
        dz = dact.cwiseProduct(
            in.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
      } else {
        dz = dact.cwiseProduct(in.unaryExpr(
            [](double v) { return kTwoOverSqrtPi * std::exp(-v * v); }));
      }
      gw += dz.transpose() * data.x;
      g.segment(s.first_bias_offset(), h) += dz.colwise().sum().transpose();
      break;
    }
    case Activation::rbf: {
      // d act / d u_j = act * (x - u_j) / sigma_g^2
      const MatrixXd ds = dact.cwiseProduct(act) / s.rbf_width;  // N x H
      const auto u = first_weights(params);
      gw += ds.transpose() * data.x;
      gw -= ds.colwise().sum().transpose().asDiagonal() * u;
      break;
    }
    case Activation::linear:
      break;
  }
  return ev;
}

double finite_loss(const Evaluation& ev) {
  const double loss = ev.loss();
  if (!std::isfinite(loss))
    throw NumericalError("loss is not finite (training diverged?)");
  return loss;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::erf: return "erf";
    case Activation::rbf: return "rbf";
    case Activation::linear: return "linear";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "erf") return Activation::erf;
  if (name == "rbf") return Activation::rbf;
  if (name == "linear") return Activation::linear;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void NetworkShape::validate() const {
  if (input_dim < 1) throw std::invalid_argument("input_dim must be >= 1");
  if (hidden_width < 1) throw std::invalid_argument("hidden_width must be >= 1");
  if (activation == Activation::rbf && !(rbf_width > 0.0))
    throw std::invalid_argument("rbf_width must be positive");
  if (activation == Activation::linear && hidden_width != input_dim)
    throw std::invalid_argument(
        "linear shape passes inputs through: hidden_width must equal input_dim");
}

Index NetworkShape::first_weights_count() const {
  return activation == Activation::linear ? 0 : hidden_width * input_dim;
}

Index NetworkShape::first_bias_count() const {
  return (activation == Activation::relu || activation == Activation::erf)
             ? hidden_width
             : 0;
}

Index NetworkShape::param_count() const {
  return first_weights_count() + first_bias_count() + hidden_width + 1;
}

NetworkParams::NetworkParams(NetworkShape s, VectorXd t)
    : shape(s), theta(std::move(t)) {
  validate();
}

NetworkParams NetworkParams::zeros(const NetworkShape& s) {
  s.validate();
  return {s, VectorXd::Zero(s.param_count())};
}

void NetworkParams::validate() const {
  shape.validate();
  if (theta.size() != shape.param_count()) {
    std::ostringstream os;
    os << "parameter vector has length " << theta.size() << ", shape implies "
       << shape.param_count();
    throw std::invalid_argument(os.str());
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (early_stop_tol < 0.0)
    throw std::invalid_argument("early_stop_tol must be non-negative");
}

double forward(const NetworkParams& params, const VectorXd& x) {
  params.validate();
  if (x.size() != params.shape.input_dim)
    throw std::invalid_argument("input length does not match input_dim");
  if (!params.theta.allFinite())
    throw std::invalid_argument("non-finite network parameter");
  if (!x.allFinite()) throw std::invalid_argument("non-finite network input");
  return forward_batch(params, MatrixXd(x.transpose()))(0);
}

VectorXd forward_batch(const NetworkParams& params, const MatrixXd& x) {
  const auto& s = params.shape;
  if (x.cols() != s.input_dim)
    throw std::invalid_argument("input width does not match input_dim");
  const MatrixXd act = activate(s, hidden_inputs(params, x));
  VectorXd out =
      act * params.theta.segment(s.output_weights_offset(), s.hidden_width);
  out.array() += params.theta(s.output_bias_offset());
  return out;
}

MatrixXd hidden_features(const NetworkParams& params, const MatrixXd& x) {
  if (x.cols() != params.shape.input_dim)
    throw std::invalid_argument("input width does not match input_dim");
  return activate(params.shape, hidden_inputs(params, x));
}

double regularised_loss(const NetworkParams& params, const VectorXd& gamma,
                        const RegressionDataset& data) {
  return anchored_loss(params, VectorXd::Zero(params.theta.size()), gamma,
                       data);
}

double anchored_loss(const NetworkParams& params, const VectorXd& theta0,
                     const VectorXd& gamma, const RegressionDataset& data) {
  params.validate();
  check_vectors(params, theta0, gamma);
  check_data(params, data);
  return finite_loss(evaluate(params, theta0, gamma, data, nullptr));
}

LossAndGrad anchored_loss_and_grad(const NetworkParams& params,
                                   const VectorXd& theta0,
                                   const VectorXd& gamma,
                                   const RegressionDataset& data) {
  params.validate();
  check_vectors(params, theta0, gamma);
  check_data(params, data);
  LossAndGrad out{0.0, {}};
  out.loss = finite_loss(evaluate(params, theta0, gamma, data, &out.grad));
  if (!out.grad.allFinite()) throw NumericalError("gradient is not finite");
  return out;
}

VectorXd grad(const NetworkParams& params, const VectorXd& theta0,
              const VectorXd& gamma, const RegressionDataset& data) {
  return anchored_loss_and_grad(params, theta0, gamma, data).grad;
}

NetworkParams train(const NetworkParams& init, const VectorXd& theta0,
                    const VectorXd& gamma, const RegressionDataset& data,
                    const TrainConfig& config) {
  config.validate();
  init.validate();
  check_vectors(init, theta0, gamma);
  check_data(init, data);

  constexpr int kWindow = 50;
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;

  NetworkParams cur = init;
  NetworkParams best = init;
  double best_loss = std::numeric_limits<double>::infinity();
  const Index p = init.theta.size();
  VectorXd m = VectorXd::Zero(p);
  VectorXd v = VectorXd::Zero(p);
  VectorXd g(p);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.epochs) + 1);

  for (int epoch = 0; epoch <= config.epochs; ++epoch) {
    const bool last = epoch == config.epochs;
    const Evaluation ev =
        evaluate(cur, theta0, gamma, data, last ? nullptr : &g);
    const double loss = ev.loss();
    if (!std::isfinite(loss) || loss > kDivergenceThreshold) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << " (loss " << loss << ")";
      throw DivergenceError(os.str(), epoch);
    }
    if (loss < best_loss) {
      best_loss = loss;
      best.theta = cur.theta;
    }
    history.push_back(best_loss);
    if (last) break;
    if (config.early_stop_tol > 0.0 && epoch >= kWindow &&
        history[history.size() - 1 - kWindow] - best_loss < config.early_stop_tol)
      break;

    if (config.optimizer == Optimizer::gradient_descent) {
      cur.theta -= config.learning_rate * g;
    } else {
      const double t = epoch + 1;
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2();
      const double c1 = 1.0 - std::pow(kBeta1, t);
      const double c2 = 1.0 - std::pow(kBeta2, t);
      cur.theta.array() -= config.learning_rate * (m.array() / c1) /
                           ((v.array() / c2).sqrt() + kEps);
    }
  }
  return best;
}

void write_params(std::ostream& os, const NetworkParams& params) {
  params.validate();
  const auto& s = params.shape;
  os << "anchored-params 1\n"
     << "activation " << to_string(s.activation) << "\n"
     << "input_dim " << s.input_dim << "\n"
     << "hidden_width " << s.hidden_width << "\n"
     << "rbf_width " << std::hexfloat << s.rbf_width << "\n"
     << "count " << std::defaultfloat << params.theta.size() << "\n";
  os << std::hexfloat;
  for (Index i = 0; i < params.theta.size(); ++i) os << params.theta(i) << "\n";
  os << std::defaultfloat;
}

namespace {

std::string expect_key(std::istream& is, std::string_view key) {
  std::string k, value;
  if (!(is >> k >> value) || k != key)
    throw std::runtime_error("parameter file: expected '" + std::string(key) +
                             "'");
  return value;
}

double parse_hex(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0')
    throw std::runtime_error("parameter file: bad number '" + token + "'");
  return v;
}

}  // namespace

NetworkParams read_params(std::istream& is) {
  if (expect_key(is, "anchored-params") != "1")
    throw std::runtime_error("parameter file: unsupported version");
  NetworkShape s;
  s.activation = parse_activation(expect_key(is, "activation"));
  s.input_dim = std::stol(expect_key(is, "input_dim"));
  s.hidden_width = std::stol(expect_key(is, "hidden_width"));
  s.rbf_width = parse_hex(expect_key(is, "rbf_width"));
  const Index count = std::stol(expect_key(is, "count"));
  s.validate();
  if (count != s.param_count())
    throw std::runtime_error("parameter file: count does not match shape");
  VectorXd theta(count);
  std::string token;
  for (Index i = 0; i < count; ++i) {
    if (!(is >> token)) throw std::runtime_error("parameter file: truncated");
    theta(i) = parse_hex(token);
  }
  return {s, std::move(theta)};
}

void save_params(const std::string& path, const NetworkParams& params) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_params(os, params);
  if (!os) throw std::runtime_error("error writing " + path);
}

NetworkParams load_params(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_params(is);
}

}  // namespace anchored
