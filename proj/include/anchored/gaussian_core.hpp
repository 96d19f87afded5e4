#pragma once

// Exact multivariate-Gaussian algebra: posterior of a Gaussian prior and
// likelihood, the MAP estimate when the prior mean is replaced by a random
// anchor, the anchor distribution that makes those MAP estimates exact
// posterior samples, and the conjugate linear-regression oracle.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace anchored {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a matrix is too ill-conditioned to trust, a factorization
/// fails after jitter, or an optimisation produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrices whose condition number exceeds this are treated as singular.
inline constexpr double kMaxConditionNumber = 1e12;

struct GaussianDist {
  VectorXd mean;
  MatrixXd cov;

  Index dim() const { return mean.size(); }

  // Throws std::invalid_argument if the shape is inconsistent, the
  // covariance is asymmetric (1e-12 relative) or not PSD (eigenvalues below
  // -1e-9 times the largest).
  void validate(std::string_view name = "distribution") const;
};

/// Gaussian with diagonal covariance. Network priors are stored this way
/// since a dense P x P covariance is unaffordable for wide layers.
struct DiagonalGaussian {
  VectorXd mean;
  VectorXd var;

  Index dim() const { return mean.size(); }
  GaussianDist to_dense() const;
};

/// Linear-Gaussian regression problem y = features * w + noise.
struct LinearDesign {
  MatrixXd features;  // N x P
  VectorXd targets;   // N
  double noise_var = 1.0;

  void validate() const;
};

// Cholesky factor of a symmetric positive-definite matrix. If the plain
// factorization fails, retries with diagonal jitter of 1e-10 ... 1e-6 times
// the mean diagonal before giving up with NumericalError.
class SpdFactor {
 public:
  SpdFactor(const MatrixXd& a, std::string_view what);

  VectorXd solve(const VectorXd& b) const { return llt_.solve(b); }
  MatrixXd solve(const MatrixXd& b) const { return llt_.solve(b); }
  MatrixXd inverse() const;
  MatrixXd matrix_l() const { return llt_.matrixL(); }
  double jitter() const { return jitter_; }
  Index dim() const { return dim_; }

 private:
  Eigen::LLT<MatrixXd> llt_;
  double jitter_ = 0.0;
  Index dim_ = 0;
};

// 2-norm condition number of a symmetric matrix; +inf when the smallest
// eigenvalue is not positive.
double condition_number(const MatrixXd& symmetric);

// Inverse of a covariance matrix, rejecting inputs whose condition number
// exceeds kMaxConditionNumber. `what` names the input in the error message.
MatrixXd checked_inverse(const MatrixXd& cov, std::string_view what);

MatrixXd symmetrized(const MatrixXd& a);

GaussianDist gaussian_posterior(const GaussianDist& prior,
                                const GaussianDist& like);

/// Posterior mode with the prior mean replaced by `theta0`.
VectorXd map_with_anchor(const GaussianDist& prior, const GaussianDist& like,
                         const VectorXd& theta0);

/// Distribution of anchors under which map_with_anchor returns exact
/// posterior samples: mean = prior mean,
/// cov = Sigma_prior + Sigma_prior Sigma_like^-1 Sigma_prior, symmetrized
/// (equal to Sigma_prior + Sigma_prior^2 Sigma_like^-1 when the two commute).
GaussianDist anchor_distribution(const GaussianDist& prior,
                                 const GaussianDist& like);

/// Linear map theta0 -> map_with_anchor(prior, like, theta0) minus its
/// offset: (Sigma_like^-1 + Sigma_prior^-1)^-1 Sigma_prior^-1.
MatrixXd anchor_map_matrix(const GaussianDist& prior, const GaussianDist& like);

/// Exact conjugate posterior over regression weights.
GaussianDist blr_fit(const LinearDesign& design, const GaussianDist& prior);

/// Closed-form minimiser of the anchored squared-error loss for a linear
/// model: (Phi^T Phi + Gamma)^-1 (Phi^T y + Gamma theta0), Gamma = diag(gamma).
VectorXd blr_anchored_map(const LinearDesign& design, const VectorXd& gamma,
                          const VectorXd& theta0);

/// n draws (one per row) from `dist`, deterministic in `seed`.
MatrixXd sample_gaussian(const GaussianDist& dist, std::uint64_t seed, Index n);
MatrixXd sample_gaussian(const DiagonalGaussian& dist, std::uint64_t seed,
                         Index n);

}  // namespace anchored
