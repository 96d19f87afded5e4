#pragma once

namespace anchored {

/// Predictive distribution at one query point. Epistemic variance comes
/// from model uncertainty, aleatoric variance from observation noise.
struct PredictiveDist {
  double mean = 0.0;
  double epistemic_var = 0.0;
  double aleatoric_var = 0.0;

  double total_var() const { return epistemic_var + aleatoric_var; }
};

}  // namespace anchored
