#pragma once

#include <vector>

#include "fr3e/first_return.hpp"
#include "fr3e/policy.hpp"
#include "fr3e/token_mdp.hpp"

namespace fr3e {

// ============================================================================
// Entropy-eliciting exploration: from every intermediate state S_j of a
// segmented base trajectory, sample M fresh continuations, score them with
// the task verifier, and estimate the state value V(S_j) as the mean reward.
// Each rollout starts from an unmodified copy of the prefix, so neither the
// base trajectory nor earlier groups are ever touched.
// ============================================================================

struct ExploreParams {
  int k_top = 4;
  int m_explore = 8;
  int max_len = 32;
};

/// M scored rollouts from one intermediate state.
struct RolloutGroup {
  int state_index = 0;
  std::vector<Trajectory> rollouts;
  std::vector<int> rewards;
  double value = 0.0;
};

/**
 * One prompt's complete exploration artifact: the base trajectory, its
 * entropy profile, the selected positions and blocks, the states S_0..S_K,
 * one rollout group per state (group 0 is the initial full-rollout group
 * supplied by the caller), the value ladder V(S_0)..V(S_K), and the
 * modulation factors alpha_0..alpha_K with alpha_0 = 1.
 */
struct ExplorationRecord {
  std::string task_id;
  Trajectory base;
  EntropyProfile profile;
  SensitivePositions positions;
  std::vector<Block> blocks;
  std::vector<IntermediateState> states;
  std::vector<RolloutGroup> groups;
  std::vector<double> values;
  std::vector<double> alphas;
};

/**
 * Samples m continuations of S_j.  Every rollout's context is the prompt
 * plus the committed block prefix; the continuation budget is max_len minus
 * the prefix length.  Throws std::invalid_argument when the prefix is
 * already at the cap.
 */
std::vector<Trajectory> rollout_from(const PolicyParams& params,
                                     const Featurizer& featurizer,
                                     const TaskInstance& task,
                                     const IntermediateState& state, int m,
                                     int max_len, Rng& rng);

/// Verifier rewards of a rollout batch, in order.
std::vector<int> score_group(const TaskInstance& task, const Vocabulary& vocab,
                             const std::vector<Trajectory>& rollouts);

/// V(S_j): mean of the binary rewards.  Throws on an empty group.
double empirical_value(const std::vector<int>& rewards);

/**
 * Runs the full first-return + exploration pipeline for one prompt: profile
 * the base trajectory, select the top-K positions, segment, build states,
 * and roll out M continuations per intermediate state.  `initial_group`
 * must hold the prompt's initial full rollouts; its mean reward becomes
 * V(S_0).  A state whose prefix is already terminated (a sensitive position
 * at the final <eos>) receives a group of m zero-length rollouts scored
 * deterministically.
 */
ExplorationRecord explore_prompt(const TaskInstance& task,
                                 const Vocabulary& vocab,
                                 const PolicyParams& params,
                                 const Featurizer& featurizer,
                                 const Trajectory& base,
                                 const RolloutGroup& initial_group,
                                 const ExploreParams& explore, Rng& rng);

}  // namespace fr3e
