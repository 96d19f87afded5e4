#pragma once

// Single-hidden-layer regression network with hand-written backprop.
//
// Parameter layout of the flattened vector theta, in order:
//   first-layer weights, H x D row-major (row j is hidden unit j; for rbf
//                        these are the bump centres u_j)
//   first-layer biases,  H (absent for rbf and linear)
//   output weights,      H
//   output bias,         1
//
// The `linear` activation is a test-only shape: the hidden layer is the
// identity on the inputs (H must equal D, no first-layer parameters), so
// the model y = w^T x + b is linear in theta and can be checked against the
// closed-form Gaussian results.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "anchored/dataset.hpp"
#include "anchored/gaussian_core.hpp"

namespace anchored {

enum class Activation { relu, erf, rbf, linear };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct NetworkShape {
  Index input_dim = 1;
  Index hidden_width = 1;
  Activation activation = Activation::relu;
  // Squared width sigma_g^2 of the rbf bumps exp(-|x-u|^2 / (2 sigma_g^2)).
  double rbf_width = 1.0;

  void validate() const;

  Index param_count() const;
  Index first_weights_offset() const { return 0; }
  Index first_weights_count() const;
  Index first_bias_offset() const { return first_weights_count(); }
  Index first_bias_count() const;
  Index output_weights_offset() const {
    return first_bias_offset() + first_bias_count();
  }
  Index output_bias_offset() const {
    return output_weights_offset() + hidden_width;
  }

  bool operator==(const NetworkShape&) const = default;
};

struct NetworkParams {
  NetworkShape shape;
  VectorXd theta;

  NetworkParams() = default;
  NetworkParams(NetworkShape s, VectorXd t);
  static NetworkParams zeros(const NetworkShape& s);

  void validate() const;
};

enum class Optimizer { gradient_descent, adaptive_moment };

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 5000;
  Optimizer optimizer = Optimizer::adaptive_moment;
  // Stop once the best loss improved by less than this over the last 50
  // epochs. Zero disables early stopping.
  double early_stop_tol = 0.0;

  void validate() const;
};

/// Loss values above this, or non-finite, abort training.
inline constexpr double kDivergenceThreshold = 1e10;

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, int epoch)
      : NumericalError(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

double forward(const NetworkParams& params, const VectorXd& x);

/// Outputs for each row of `x` (N x D).
VectorXd forward_batch(const NetworkParams& params, const MatrixXd& x);

/// Hidden-layer activations, N x H.
MatrixXd hidden_features(const NetworkParams& params, const MatrixXd& x);

/// (1/N)|y - yhat|^2 + (1/N) sum_k gamma_k theta_k^2
double regularised_loss(const NetworkParams& params, const VectorXd& gamma,
                        const RegressionDataset& data);

/// (1/N)|y - yhat|^2 + (1/N) sum_k gamma_k (theta_k - theta0_k)^2
double anchored_loss(const NetworkParams& params, const VectorXd& theta0,
                     const VectorXd& gamma, const RegressionDataset& data);

/// Gradient of anchored_loss with respect to theta.
VectorXd grad(const NetworkParams& params, const VectorXd& theta0,
              const VectorXd& gamma, const RegressionDataset& data);

struct LossAndGrad {
  double loss;
  VectorXd grad;
};
LossAndGrad anchored_loss_and_grad(const NetworkParams& params,
                                   const VectorXd& theta0,
                                   const VectorXd& gamma,
                                   const RegressionDataset& data);

/// Full-batch minimisation of the anchored loss starting from `init`.
/// Returns the iterate with the lowest loss seen, so the result never scores
/// worse than `init`.
NetworkParams train(const NetworkParams& init, const VectorXd& theta0,
                    const VectorXd& gamma, const RegressionDataset& data,
                    const TrainConfig& config);

// Text format, values as hex floats so a round trip is bit-exact:
//
//   anchored-params 1
//   activation relu
//   input_dim 1
//   hidden_width 100
//   rbf_width 0x1p+0
//   count 301
//   <count lines, one hex float each, in theta order>
void write_params(std::ostream& os, const NetworkParams& params);
NetworkParams read_params(std::istream& is);
void save_params(const std::string& path, const NetworkParams& params);
NetworkParams load_params(const std::string& path);

}  // namespace anchored
