#pragma once

// Exact GP regression with the covariance functions of infinitely wide
// single-hidden-layer networks, used as the gold standard the ensembles are
// compared against.
//
// Every kernel includes the output-bias variance, so k(x, x') is the prior
// covariance of the matching network f(x) = sum_j w_j phi_j(x) + b with
// Var[w_j] = output_var_base / H and Var[b] = bias_var.

#include <optional>
#include <vector>

#include "anchored/ensemble.hpp"
#include "anchored/gaussian_core.hpp"
#include "anchored/predictive.hpp"

namespace anchored {

enum class KernelKind { relu_arccos, erf, rbf_finite };

struct KernelSpec {
  KernelKind kind = KernelKind::relu_arccos;
  double weight_var = 1.0;       // sigma_w^2
  double bias_var = 1.0;         // sigma_b^2 (may be 0)
  double output_var_base = 1.0;  // H * Var[output weight]
  double center_var = 1.0;       // sigma_u^2, rbf only
  double rbf_width = 1.0;        // sigma_g^2, rbf only

  void validate() const;
};

/// Kernel matching a network shape and prior; throws for the test-only
/// linear shape.
KernelSpec kernel_for(const NetworkShape& shape, const PriorSpec& prior);

double kernel_eval(const KernelSpec& spec, const VectorXd& x,
                   const VectorXd& x2);

/// Gram matrix between the rows of a and b.
MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& a,
                       const MatrixXd& b);

struct GPPosterior {
  KernelSpec spec;
  MatrixXd x;
  VectorXd y;
  double noise_var = 1.0;
  std::optional<SpdFactor> factor;  // of K + noise_var I; empty when N = 0
  VectorXd alpha;                   // (K + noise_var I)^-1 y
};

GPPosterior gp_fit(const MatrixXd& x, const VectorXd& y,
                   const KernelSpec& spec, double noise_var);

/// Latent mean/variance at each query row; aleatoric_var is the fit's
/// noise variance.
std::vector<PredictiveDist> gp_predict(const GPPosterior& post,
                                       const MatrixXd& x_query);

}  // namespace anchored
