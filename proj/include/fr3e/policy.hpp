#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fr3e/rng.hpp"
#include "fr3e/token_mdp.hpp"

namespace fr3e {

// ============================================================================
// Linear-softmax token policy over hashed context features.
//
// The score of token v in state s is sum_{f in features(s)} W[f][v]; the
// policy is the softmax of the scores.  Features are sparse binary indices,
// so gradients touch only the active rows and have a closed form that the
// tests check against central finite differences.
// ============================================================================

/// Active feature indices of one generation state.  Features are binary;
/// a duplicated index (hash collision) simply counts twice everywhere.
struct ContextFeatures {
  std::vector<int32_t> idx;
};

/**
 * Deterministic featurizer: a bias feature, prompt summary features
 * (digit-sum, operand count, whole-prompt signature), n-gram features of the
 * last `window` context tokens, and the generated-length indicator.  All
 * hashes are FNV-1a, so the mapping is identical across platforms.
 */
struct Featurizer {
  Vocabulary vocab;
  int feature_dim = 4096;
  int window = 4;

  ContextFeatures features(std::span<const int> prompt,
                           std::span<const int> generated) const;
};

ContextFeatures featurize(const Featurizer& featurizer, const GenState& state);

struct PolicyParams {
  int feature_dim = 0;
  int vocab_size = 0;
  uint64_t version = 0;
  std::vector<double> weights;  // row-major [feature][token]

  static PolicyParams zeros(int feature_dim, int vocab_size);
};

struct TokenDistribution {
  std::vector<double> probs;
};

/**
 * Scores, probabilities, and the log-normalizer of one state, computed once
 * and shared by sampling, log-probability, and entropy queries.  Keeping a
 * single code path makes log-probabilities recorded during generation
 * bit-identical to the ones recomputed during optimization.
 */
struct Evaluation {
  TokenDistribution dist;
  double max_score = 0.0;
  double log_z = 0.0;
  std::vector<double> scores;

  double log_prob(int token) const {
    return scores[static_cast<size_t>(token)] - max_score - log_z;
  }
};

Evaluation evaluate(const PolicyParams& params, const ContextFeatures& feats);

/// Softmax distribution over the vocabulary; entries sum to 1 within 1e-9.
TokenDistribution token_distribution(const PolicyParams& params,
                                     const ContextFeatures& feats);

/// Inverse-CDF sample from the distribution using a single uniform draw.
int sample_token(const TokenDistribution& dist, Rng& rng);

/// Numerically stable log pi(token | state).
double log_prob(const PolicyParams& params, const ContextFeatures& feats,
                int token);

/**
 * Gradient of log pi(token | state) with respect to the weights.  For every
 * active feature f the row gradient is coeffs, where
 * coeffs[v] = 1{v == token} - p(v).  Rows of inactive features are zero.
 */
struct LogProbGrad {
  ContextFeatures features;
  std::vector<double> coeffs;
};

LogProbGrad grad_log_prob(const PolicyParams& params,
                          const ContextFeatures& feats, int token);

/// Dense additive weight update, same shape as PolicyParams::weights.
struct WeightDelta {
  std::vector<double> values;
};

/**
 * Returns params + delta with the version counter bumped.  Throws
 * std::invalid_argument on shape mismatch or non-finite entries.
 */
PolicyParams apply_update(const PolicyParams& params, const WeightDelta& delta);

/**
 * Samples a full trajectory for the task: tokens until <eos> or the length
 * cap, with per-token log-probabilities and entropies recorded under the
 * same parameters used for sampling.
 */
Trajectory generate(const PolicyParams& params, const Featurizer& featurizer,
                    const TaskInstance& task, int max_len, Rng& rng);

/// Deterministic argmax decoding (ties resolved to the lowest token id).
Trajectory greedy_decode(const PolicyParams& params,
                         const Featurizer& featurizer, const TaskInstance& task,
                         int max_len);

/**
 * Samples a continuation of an existing prefix.  `context` holds the task
 * prompt (first `prompt_len` tokens) plus the committed generated prefix;
 * the generated length including that prefix is capped at max_len.  Throws
 * std::invalid_argument when the prefix is already at the cap or already
 * ended by <eos>.
 */
Trajectory sample_continuation(const PolicyParams& params,
                               const Featurizer& featurizer,
                               const std::string& task_id,
                               std::vector<int> context, int prompt_len,
                               int max_len, Rng& rng);

/// Binary checkpoint with feature_dim / vocab size / version header.
/// Round-trips bit for bit.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace fr3e
