#pragma once

// Anchored ensembles: every member is regularised towards its own draw from
// the parameter prior, so that (for wide networks) each trained member is a
// sample from the posterior and the spread of member outputs estimates the
// epistemic part of the posterior predictive.

#include <cstdint>
#include <string>
#include <vector>

#include "anchored/dataset.hpp"
#include "anchored/gaussian_core.hpp"
#include "anchored/network.hpp"
#include "anchored/predictive.hpp"

namespace anchored {

struct PriorSpec {
  double first_layer_var = 1.0;        // sigma_w^2
  double bias_var = 1.0;               // sigma_b^2, first-layer and output biases
  double output_layer_var_base = 1.0;  // output weights get this / H
  double center_var = 1.0;             // sigma_u^2, rbf centres

  void validate() const;
  bool operator==(const PriorSpec&) const = default;
};

/// Zero-mean diagonal prior over the flattened parameter vector, with the
/// output-weight variance scaled by 1/H.
DiagonalGaussian materialize_prior(const NetworkShape& shape,
                                   const PriorSpec& spec);

struct AnchoredMember {
  NetworkParams params;
  VectorXd anchor;  // theta_0
  VectorXd gamma;   // diagonal of the regulariser, sigma_eps^2 / prior var
  std::uint64_t seed = 0;
};

struct Ensemble {
  NetworkShape shape;
  PriorSpec prior;
  double sigma_eps_sq = 1.0;
  std::vector<AnchoredMember> members;
};

/// m members with anchors drawn from the prior using seeds base_seed + i.
/// Parameters start at the anchors.
Ensemble build_ensemble(Index m, const NetworkShape& shape,
                        const PriorSpec& spec, double sigma_eps_sq,
                        std::uint64_t base_seed);

/// Trains every member on its own anchored loss. Members are independent,
/// so they are spread over `threads` workers; results do not depend on the
/// thread count.
void train_ensemble(Ensemble& ensemble, const RegressionDataset& data,
                    const TrainConfig& config, int threads = 1);

/// Mean, unbiased cross-member variance (0 for a single member) and the
/// aleatoric noise at each row of `x_query`.
std::vector<PredictiveDist> predict(const Ensemble& ensemble,
                                    const MatrixXd& x_query);

// On-disk layout: <dir>/manifest.json plus one parameter file per member
// (member_000.params, ...) in the format of write_params. Anchors and
// regularisers are regenerated from the manifest's seeds on load.
void save_ensemble(const std::string& dir, const Ensemble& ensemble);
Ensemble load_ensemble(const std::string& dir);

}  // namespace anchored
