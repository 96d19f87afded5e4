#pragma once

// Monte-Carlo prior covariance of single-hidden-layer networks, sampled
// directly from the weight priors without building parameter vectors.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "anchored/gp_reference.hpp"

namespace oracle {

using anchored::Index;
using anchored::KernelKind;
using anchored::KernelSpec;
using anchored::MatrixXd;
using anchored::VectorXd;

// erf by cubic Hermite interpolation of std::erf and its derivative on a
// 1/1024 grid over [-6, 6]; absolute error below 1e-13.
class ErfTable {
 public:
  ErfTable() {
    const auto count = static_cast<std::size_t>(2.0 * kEdge / kStep) + 2;
    value_.resize(count);
    slope_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const double u = -kEdge + static_cast<double>(i) * kStep;
      value_[i] = std::erf(u);
      slope_[i] = kStep * 2.0 / std::sqrt(M_PI) * std::exp(-u * u);
    }
  }

  double operator()(double u) const {
    if (u <= -kEdge) return -1.0;
    if (u >= kEdge) return 1.0;
    const double s = (u + kEdge) / kStep;
    const auto i = static_cast<std::size_t>(s);
    const double t = s - static_cast<double>(i);
    const double y0 = value_[i], y1 = value_[i + 1];
    const double m0 = slope_[i], m1 = slope_[i + 1];
    const double c2 = 3.0 * (y1 - y0) - 2.0 * m0 - m1;
    const double c3 = 2.0 * (y0 - y1) + m0 + m1;
    return y0 + t * (m0 + t * (c2 + t * c3));
  }

 private:
  static constexpr double kEdge = 6.0;
  static constexpr double kStep = 1.0 / 1024.0;
  std::vector<double> value_, slope_;
};

struct PriorCovariance {
  MatrixXd plain;  // sample covariance of full network outputs
  MatrixXd rao_blackwell;  // mean of (base/H) Phi Phi^T + bias_var
};

// Network outputs at the rows of `x` for `draws` prior draws of a width-H
// network. Each draw samples the hidden layer, then the outputs from their
// exact conditional law N(0, (base/H) Phi Phi^T + bias_var), which equals
// drawing the H output weights and the output bias.
inline PriorCovariance network_prior_covariance(const KernelSpec& k,
                                                const MatrixXd& x, Index h,
                                                Index draws,
                                                std::uint64_t seed) {
  const Index n = x.rows();
  const Index d = x.cols();
  boost::random::mt19937_64 rng(seed);
  boost::random::normal_distribution<double> normal;
  const bool rbf = k.kind == KernelKind::rbf_finite;
  const double sw = std::sqrt(rbf ? k.center_var : k.weight_var);
  const double sb = std::sqrt(k.bias_var);
  const double out_scale = k.output_var_base / static_cast<double>(h);

  // Pre-activations are xs * g for the raw normals g (rows: input weights
  // or centres, then the hidden bias). rbf: |x - c|^2 = |x|^2 - 2 x.c + |c|^2
  // with c = sw g.
  const Index rows = rbf ? d : d + 1;
  MatrixXd xs(n, rows);
  xs.leftCols(d) = (rbf ? -2.0 * sw : sw) * x;
  if (!rbf) xs.col(d).setConstant(sb);
  const Eigen::ArrayXd x_sq = x.rowwise().squaredNorm().array();

  std::vector<double> buf(static_cast<std::size_t>(rows * h));
  MatrixXd phi(n, h);
  MatrixXd draw_gram(n, n);
  MatrixXd gram = MatrixXd::Zero(n, n);
  MatrixXd outer = MatrixXd::Zero(n, n);
  VectorXd sum = VectorXd::Zero(n);
  VectorXd z(n);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(n);
  const ErfTable erf_table;
  for (Index r = 0; r < draws; ++r) {
    for (double& v : buf) v = normal(rng);
    const Eigen::Map<const MatrixXd> g(buf.data(), rows, h);
    phi = xs.lazyProduct(g);
    switch (k.kind) {
      case KernelKind::relu_arccos:
        phi = phi.cwiseMax(0.0);
        break;
      case KernelKind::erf:
        for (Index i = 0; i < phi.size(); ++i)
          phi.data()[i] = erf_table(phi.data()[i]);
        break;
      case KernelKind::rbf_finite:
        phi.array().rowwise() +=
            (sw * sw) * g.colwise().squaredNorm().array();
        phi = ((phi.array().colwise() + x_sq) * (-0.5 / k.rbf_width))
                  .max(-700.0)
                  .exp();
        break;
    }
    draw_gram.noalias() = phi * phi.transpose();
    gram += draw_gram;

    eig.compute(out_scale * draw_gram + MatrixXd::Constant(n, n, k.bias_var));
    for (Index i = 0; i < n; ++i) z(i) = normal(rng);
    const VectorXd f = eig.eigenvectors() *
                       (eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().cwiseProduct(z));
    sum += f;
    outer.noalias() += f * f.transpose();
  }
  const double m = static_cast<double>(draws);
  PriorCovariance out;
  out.plain = (outer - sum * sum.transpose() / m) / (m - 1.0);
  out.rao_blackwell = gram * (out_scale / m);
  out.rao_blackwell.array() += k.bias_var;
  return out;
}

// Largest |estimate - k(x_i, x_j)| over the off-diagonal pairs, scaled by
// sqrt(k(x_i, x_i) k(x_j, x_j)).
inline double max_pair_error(const KernelSpec& k, const MatrixXd& x,
                             const MatrixXd& estimate) {
  const MatrixXd exact = anchored::kernel_matrix(k, x, x);
  double worst = 0.0;
  for (Index j = 0; j < x.rows(); ++j)
    for (Index i = j + 1; i < x.rows(); ++i)
      worst = std::max(worst, std::abs(estimate(i, j) - exact(i, j)) /
                                  std::sqrt(exact(i, i) * exact(j, j)));
  return worst;
}

}  // namespace oracle
