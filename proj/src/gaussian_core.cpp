#include "anchored/gaussian_core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace anchored {

namespace {

std::string msg(std::string_view a, std::string_view b) {
  std::string s(a);
  s += b;
  return s;
}

void require_same_dim(const GaussianDist& prior, const GaussianDist& like) {
  prior.validate("prior");
  like.validate("likelihood");
  if (prior.dim() != like.dim()) {
    std::ostringstream os;
    os << "dimension mismatch: prior has " << prior.dim()
       << ", likelihood has " << like.dim();
    throw std::invalid_argument(os.str());
  }
}

bool is_diagonal(const MatrixXd& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

// Shared by gaussian_posterior and map_with_anchor so that anchoring at the
// prior mean reproduces the posterior mean bit for bit.
struct PosteriorPrecision {
  MatrixXd prior_precision;
  MatrixXd like_precision;
  SpdFactor post;

  PosteriorPrecision(const GaussianDist& prior, const GaussianDist& like)
      : prior_precision(checked_inverse(prior.cov, "prior covariance")),
        like_precision(checked_inverse(like.cov, "likelihood covariance")),
        post(symmetrized(prior_precision + like_precision),
             "posterior precision") {}

  VectorXd mode(const VectorXd& like_mean, const VectorXd& prior_mean) const {
    return post.solve(VectorXd(like_precision * like_mean +
                               prior_precision * prior_mean));
  }
};

}  // namespace

void GaussianDist::validate(std::string_view name) const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    std::ostringstream os;
    os << name << ": mean has length " << mean.size() << " but covariance is "
       << cov.rows() << "x" << cov.cols();
    throw std::invalid_argument(os.str());
  }
  if (!mean.allFinite() || !cov.allFinite())
    throw std::invalid_argument(msg(name, ": non-finite entries"));
  if (mean.size() == 0) return;
  const double scale = cov.cwiseAbs().maxCoeff();
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument(msg(name, ": covariance is not symmetric"));
  if (scale == 0.0) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo < -1e-9 * std::max(hi, 0.0))
    throw std::invalid_argument(
        msg(name, ": covariance is not positive semi-definite"));
}

GaussianDist DiagonalGaussian::to_dense() const {
  return {mean, MatrixXd(var.asDiagonal())};
}

void LinearDesign::validate() const {
  if (features.rows() != targets.size()) {
    std::ostringstream os;
    os << "design has " << features.rows() << " feature rows but "
       << targets.size() << " targets";
    throw std::invalid_argument(os.str());
  }
  if (!(noise_var > 0.0) || !std::isfinite(noise_var))
    throw std::invalid_argument("noise variance must be positive");
}

SpdFactor::SpdFactor(const MatrixXd& a, std::string_view what)
    : dim_(a.rows()) {
  if (a.rows() != a.cols())
    throw std::invalid_argument(msg(what, ": matrix is not square"));
  if (!a.allFinite())
    throw NumericalError(msg(what, ": non-finite entries"));
  llt_.compute(a);
  if (llt_.info() == Eigen::Success) return;

  const double base = dim_ > 0 ? std::abs(a.diagonal().mean()) : 0.0;
  constexpr std::array<double, 5> ladder{1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
  for (double step : ladder) {
    jitter_ = step * (base > 0.0 ? base : 1.0);
    MatrixXd shifted = a;
    shifted.diagonal().array() += jitter_;
    llt_.compute(shifted);
    if (llt_.info() == Eigen::Success) return;
  }
  throw NumericalError(
      msg(what, ": Cholesky factorization failed after jitter"));
}

MatrixXd SpdFactor::inverse() const {
  return symmetrized(llt_.solve(MatrixXd::Identity(dim_, dim_)));
}

double condition_number(const MatrixXd& symmetric) {
  if (symmetric.size() == 0) return 1.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(symmetric,
                                              Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

MatrixXd checked_inverse(const MatrixXd& cov, std::string_view what) {
  if (cov.size() == 0) return cov;
  if (is_diagonal(cov)) {
    const VectorXd d = cov.diagonal();
    const double lo = d.minCoeff();
    if (!(lo > 0.0) || d.maxCoeff() / lo > kMaxConditionNumber)
      throw NumericalError(msg(what, " is singular or ill-conditioned"));
    return MatrixXd(d.cwiseInverse().asDiagonal());
  }
  if (condition_number(cov) > kMaxConditionNumber)
    throw NumericalError(msg(what, " is singular or ill-conditioned"));
  return SpdFactor(cov, what).inverse();
}

MatrixXd symmetrized(const MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

GaussianDist gaussian_posterior(const GaussianDist& prior,
                                const GaussianDist& like) {
  require_same_dim(prior, like);
  const PosteriorPrecision pp(prior, like);
  return {pp.mode(like.mean, prior.mean), pp.post.inverse()};
}

VectorXd map_with_anchor(const GaussianDist& prior, const GaussianDist& like,
                         const VectorXd& theta0) {
  require_same_dim(prior, like);
  if (theta0.size() != prior.dim())
    throw std::invalid_argument("anchor length does not match dimension");
  const PosteriorPrecision pp(prior, like);
  return pp.mode(like.mean, theta0);
}

GaussianDist anchor_distribution(const GaussianDist& prior,
                                 const GaussianDist& like) {
  require_same_dim(prior, like);
  const MatrixXd like_precision =
      checked_inverse(like.cov, "likelihood covariance");
  MatrixXd cov = prior.cov + prior.cov * like_precision * prior.cov;
  return {prior.mean, symmetrized(cov)};
}

MatrixXd anchor_map_matrix(const GaussianDist& prior,
                           const GaussianDist& like) {
  require_same_dim(prior, like);
  const PosteriorPrecision pp(prior, like);
  return pp.post.solve(pp.prior_precision);
}

GaussianDist blr_fit(const LinearDesign& design, const GaussianDist& prior) {
  design.validate();
  prior.validate("prior");
  if (design.features.cols() != prior.dim()) {
    std::ostringstream os;
    os << "design has " << design.features.cols()
       << " feature columns, prior has dimension " << prior.dim();
    throw std::invalid_argument(os.str());
  }
  if (design.features.rows() == 0) return prior;

  const MatrixXd prior_precision =
      checked_inverse(prior.cov, "prior covariance");
  const MatrixXd& phi = design.features;
  const MatrixXd precision = symmetrized(
      phi.transpose() * phi / design.noise_var + prior_precision);
  const SpdFactor post(precision, "posterior precision");
  const VectorXd rhs = phi.transpose() * design.targets / design.noise_var +
                       prior_precision * prior.mean;
  return {post.solve(rhs), post.inverse()};
}

VectorXd blr_anchored_map(const LinearDesign& design, const VectorXd& gamma,
                          const VectorXd& theta0) {
  design.validate();
  const Index p = design.features.cols();
  if (gamma.size() != p || theta0.size() != p)
    throw std::invalid_argument(
        "regulariser and anchor must match the feature count");
  if (!(gamma.array() > 0.0).all())
    throw std::invalid_argument("regulariser entries must be positive");

  const MatrixXd& phi = design.features;
  MatrixXd normal = phi.transpose() * phi;
  normal.diagonal() += gamma;
  normal = symmetrized(normal);
  if (condition_number(normal) > kMaxConditionNumber)
    throw NumericalError("normal-equation matrix is singular");
  const VectorXd rhs =
      phi.transpose() * design.targets + gamma.cwiseProduct(theta0);
  return SpdFactor(normal, "normal-equation matrix").solve(rhs);
}

MatrixXd sample_gaussian(const GaussianDist& dist, std::uint64_t seed,
                         Index n) {
  dist.validate("sampling distribution");
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");

  const Index p = dist.dim();
  MatrixXd root;
  if (is_diagonal(dist.cov)) {
    root = dist.cov.diagonal().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(dist.cov);
    const VectorXd scale = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    root = eig.eigenvectors() * scale.asDiagonal();
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd z(p, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < p; ++i) z(i, j) = normal(rng);
  MatrixXd out = (root * z).transpose();
  out.rowwise() += dist.mean.transpose();
  return out;
}

MatrixXd sample_gaussian(const DiagonalGaussian& dist, std::uint64_t seed,
                         Index n) {
  if (dist.var.size() != dist.mean.size())
    throw std::invalid_argument("diagonal Gaussian: size mismatch");
  if ((dist.var.array() < 0.0).any() || !dist.var.allFinite())
    throw std::invalid_argument("diagonal Gaussian: negative variance");
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");

  const VectorXd sd = dist.var.cwiseSqrt();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd out(n, dist.dim());
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < dist.dim(); ++i)
      out(j, i) = dist.mean(i) + sd(i) * normal(rng);
  return out;
}

}  // namespace anchored
