#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>

namespace anchored {

// Per-column affine map recorded when a dataset is standardised, so
// predictions can be mapped back to the original units.
struct NormStats {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_std;  // 0 marks a constant column
  double target_mean = 0.0;
  double target_std = 1.0;
};

struct RegressionDataset {
  std::string name;
  Eigen::MatrixXd x;  // N x D
  Eigen::VectorXd y;  // N
  double sigma_eps_sq = 1.0;  // aleatoric variance, in normalised target units
  std::optional<NormStats> norm;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index input_dim() const { return x.cols(); }
};

}  // namespace anchored
