#pragma once

#include <vector>

namespace fr3e {

// ============================================================================
// Adaptive advantage modulation.
//
// Each rollout group j has an empirical value V(S_j), the mean of its binary
// rewards.  The modulation factor
//
//     alpha_j = exp(V(S_{j-1}) - V(S_j))
//
// damps updates where the value improved (alpha < 1) and leaves stagnant or
// degrading segments at full strength (alpha >= 1).  The modulated advantage
// of rollout m in group j is alpha_j * (r_{j,m} - V(S_j)), broadcast to every
// continuation token.  With complete groups of equal trajectory length the
// token-weighted batch mean is exactly zero because each group's residuals
// sum to zero before scaling.
// ============================================================================

/// One rollout's advantage bookkeeping inside a batch.
struct AdvantageRecord {
  int state_index = 0;    // group index j
  int reward = 0;         // binary outcome of the rollout
  double value = 0.0;     // V(S_j) of the group
  double alpha = 1.0;     // modulation factor of the group
  int token_count = 0;    // trajectory length L contributed by the rollout
  double raw = 0.0;       // r - V(S_j)
  double modulated = 0.0; // alpha * raw
};

/// Per-group summary: values straddling the transition and the factor.
struct GroupAdvantage {
  int state_index = 0;
  double value_prev = 0.0;
  double value = 0.0;
  double alpha = 1.0;
};

/// alpha_j = exp(V(S_{j-1}) - V(S_j)).  Values must lie in [0, 1].
double modulation_factor(double value_prev, double value);

/// r - V(S_j) for a binary reward.
double raw_advantage(int reward, double value);

/// alpha * raw.
double modulate(double alpha, double raw);

/**
 * Token-weighted mean of the modulated advantages:
 * sum_j alpha_j * sum_m L_{j,m} (r_{j,m} - V_j)  /  sum_{j,m} L_{j,m}.
 * When `equal_lengths` is set the records of each group must share one
 * trajectory length; the mean is then zero within 1e-12 for complete groups.
 * Throws std::invalid_argument on an empty batch or a violated equal-length
 * claim.
 */
double batch_mean_modulated(const std::vector<AdvantageRecord>& records,
                            bool equal_lengths);

/**
 * Group-normalized baseline advantages: (r_i - mean) / std with the
 * population standard deviation.  Throws std::invalid_argument when the
 * standard deviation is zero; uniform-reward groups must be removed by
 * rejection sampling before normalization.
 */
std::vector<double> grpo_group_advantage(const std::vector<int>& rewards);

}  // namespace fr3e
