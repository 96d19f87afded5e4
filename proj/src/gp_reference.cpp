#include "anchored/gp_reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace anchored {

namespace {

using std::numbers::pi;

// E[relu(u) relu(u')] for zero-mean Gaussian (u, u') with the given second
// moments: the order-1 arc-cosine kernel.
double arccos1(double kxx, double kyy, double kxy) {
  const double norm = std::sqrt(kxx * kyy);
  if (norm == 0.0) return 0.0;
  const double c = std::clamp(kxy / norm, -1.0, 1.0);
  const double theta = std::acos(c);
  return norm * (std::sin(theta) + (pi - theta) * c) / (2.0 * pi);
}

// E[erf(u) erf(u')] for zero-mean Gaussian (u, u').
double arcsine(double kxx, double kyy, double kxy) {
  const double denom = std::sqrt((1.0 + 2.0 * kxx) * (1.0 + 2.0 * kyy));
  return (2.0 / pi) * std::asin(std::clamp(2.0 * kxy / denom, -1.0, 1.0));
}

// E_u[exp(-|x-u|^2/(2g)) exp(-|x'-u|^2/(2g))] with u ~ N(0, s I).
double gaussian_bump_product(double g, double s, const VectorXd& x,
                             const VectorXd& x2) {
  const double d = static_cast<double>(x.size());
  const double spread = g + 2.0 * s;
  return std::pow(g / spread, 0.5 * d) *
         std::exp(-(x - x2).squaredNorm() / (4.0 * g) -
                  (x + x2).squaredNorm() / (4.0 * spread));
}

}  // namespace

void KernelSpec::validate() const {
  if (!(weight_var > 0.0) || !(bias_var >= 0.0) || !(output_var_base > 0.0) ||
      !(center_var > 0.0) || !(rbf_width > 0.0))
    throw std::invalid_argument("kernel hyperparameters must be positive");
}

KernelSpec kernel_for(const NetworkShape& shape, const PriorSpec& prior) {
  KernelSpec k;
  switch (shape.activation) {
    case Activation::relu: k.kind = KernelKind::relu_arccos; break;
    case Activation::erf: k.kind = KernelKind::erf; break;
    case Activation::rbf: k.kind = KernelKind::rbf_finite; break;
    case Activation::linear:
      throw std::invalid_argument("no reference kernel for the linear shape");
  }
  k.weight_var = prior.first_layer_var;
  k.bias_var = prior.bias_var;
  k.output_var_base = prior.output_layer_var_base;
  k.center_var = prior.center_var;
  k.rbf_width = shape.rbf_width;
  return k;
}

double kernel_eval(const KernelSpec& spec, const VectorXd& x,
                   const VectorXd& x2) {
  if (x.size() != x2.size())
    throw std::invalid_argument("kernel inputs differ in dimension");
  double hidden = 0.0;
  switch (spec.kind) {
    case KernelKind::relu_arccos:
    case KernelKind::erf: {
      // Second moments of the pre-activations w.x + b.
      const double kxx = spec.bias_var + spec.weight_var * x.squaredNorm();
      const double kyy = spec.bias_var + spec.weight_var * x2.squaredNorm();
      const double kxy = spec.bias_var + spec.weight_var * x.dot(x2);
      hidden = spec.kind == KernelKind::relu_arccos ? arccos1(kxx, kyy, kxy)
                                                    : arcsine(kxx, kyy, kxy);
      break;
    }
    case KernelKind::rbf_finite:
      hidden = gaussian_bump_product(spec.rbf_width, spec.center_var, x, x2);
      break;
  }
  return spec.output_var_base * hidden + spec.bias_var;
}

MatrixXd kernel_matrix(const KernelSpec& spec, const MatrixXd& a,
                       const MatrixXd& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("kernel inputs differ in dimension");
  MatrixXd k(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    const VectorXd bj = b.row(j).transpose();
    for (Index i = 0; i < a.rows(); ++i)
      k(i, j) = kernel_eval(spec, a.row(i).transpose(), bj);
  }
  return k;
}

GPPosterior gp_fit(const MatrixXd& x, const VectorXd& y,
                   const KernelSpec& spec, double noise_var) {
  spec.validate();
  if (!(noise_var > 0.0))
    throw std::invalid_argument("noise variance must be positive");
  if (x.rows() != y.size())
    throw std::invalid_argument("GP inputs and targets differ in length");

  GPPosterior post{spec, x, y, noise_var, std::nullopt, VectorXd()};
  if (x.rows() == 0) return post;
  MatrixXd k = symmetrized(kernel_matrix(spec, x, x));
  k.diagonal().array() += noise_var;
  post.factor.emplace(k, "GP kernel matrix");
  post.alpha = post.factor->solve(y);
  return post;
}

std::vector<PredictiveDist> gp_predict(const GPPosterior& post,
                                       const MatrixXd& x_query) {
  std::vector<PredictiveDist> out(static_cast<std::size_t>(x_query.rows()));
  if (x_query.rows() == 0) return out;
  const Index dim = post.x.rows() > 0 ? post.x.cols() : x_query.cols();
  if (x_query.cols() != dim)
    throw std::invalid_argument("query dimension differs from training inputs");

  MatrixXd cross;  // N x Q
  MatrixXd v;
  if (post.factor) {
    cross = kernel_matrix(post.spec, post.x, x_query);
    v = post.factor->matrix_l().triangularView<Eigen::Lower>().solve(cross);
  }
  for (Index q = 0; q < x_query.rows(); ++q) {
    const VectorXd xq = x_query.row(q).transpose();
    const double prior_var = kernel_eval(post.spec, xq, xq);
    double mean = 0.0;
    double var = prior_var;
    if (post.factor) {
      mean = cross.col(q).dot(post.alpha);
      var = prior_var - v.col(q).squaredNorm();
    }
    out[static_cast<std::size_t>(q)] = {mean, std::max(var, 0.0),
                                        post.noise_var};
  }
  return out;
}

}  // namespace anchored
