#pragma once

#include <vector>

#include "fr3e/policy.hpp"
#include "fr3e/token_mdp.hpp"

namespace fr3e {

// ============================================================================
// First Return stage: profile the per-token entropy of a base trajectory,
// pick the K highest-entropy positions, and cut the trajectory into blocks
// whose prefixes become the rollout roots of the exploration stage.
//
// Positions are 1-based: position k refers to the k-th generated token, and
// the entropy at position k is the entropy of the sampling distribution
// conditioned on everything before that token.  Block n covers positions
// (k_{n-1}, k_n] with k_0 = 0 and k_{K+1} = L, so the K+1 blocks partition
// the trajectory exactly; only the final block can be empty (when k_K = L).
// ============================================================================

/// Per-position token entropies H_1..H_L of a base trajectory, in nats.
struct EntropyProfile {
  std::vector<double> values;
};

/// Selected positions k_1 < ... < k_K (1-based, ascending).
struct SensitivePositions {
  std::vector<int> positions;
};

struct Block {
  int index = 0;  // 1-based block number
  std::vector<int> tokens;

  int token_count() const { return static_cast<int>(tokens.size()); }
};

/// S_j = prompt plus blocks B_1..B_j; S_0 is the bare prompt.
struct IntermediateState {
  int j = 0;
  GenState prefix;
};

/**
 * Shannon entropy of a token distribution in nats, with 0 * log 0 taken as
 * 0.  Throws std::invalid_argument when the entries are negative or do not
 * sum to 1 within 1e-6.
 */
double token_entropy(const TokenDistribution& dist);

/**
 * Recomputes the per-position entropies of a base trajectory under the given
 * parameters.  When the parameters are the snapshot that generated the
 * trajectory the profile equals the entropies recorded during sampling.
 */
EntropyProfile entropy_profile(const PolicyParams& params,
                               const Featurizer& featurizer,
                               const Trajectory& base);

/**
 * Positions of the min(k, L) largest entropies.  Ties prefer the earlier
 * position; the result is sorted ascending.  Throws std::invalid_argument
 * on an empty profile or k < 0.
 */
SensitivePositions select_topk(const EntropyProfile& profile, int k);

/**
 * Cuts the base trajectory at the sensitive positions.  Returns K+1 blocks
 * whose concatenation reproduces the generated tokens exactly.
 */
std::vector<Block> segment_blocks(const Trajectory& base,
                                  const SensitivePositions& positions);

/// States S_0..S_K; S_j extends S_{j-1} by block j.
std::vector<IntermediateState> build_states(const TaskInstance& task,
                                            const std::vector<Block>& blocks);

}  // namespace fr3e
