#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fr3e/advantage.hpp"
#include "fr3e/explore.hpp"
#include "fr3e/policy.hpp"
#include "fr3e/telemetry.hpp"
#include "fr3e/token_mdp.hpp"

namespace fr3e {

// ============================================================================
// Training loop: rejection-sampled batch collection (FR3E exploration or the
// group-normalized GRPO++ baseline), clip-higher policy optimization, and
// deterministic end-to-end runs.  The whole run is a pure function of
// (config, task suites, seed).
// ============================================================================

struct TrainConfig {
  std::string algorithm = "fr3e";  // "fr3e" or "grpo++"
  uint64_t seed = 1;
  int max_steps = 100;
  int batch_size = 32;   // accepted prompts per optimization step
  int mini_batch = 8;    // prompts worth of samples per gradient update
  double lr = 0.05;
  double eps_low = 0.22;   // clip band lower offset: ratio floor 1 - eps_low
  double eps_high = 0.28;  // clip band upper offset: ratio ceiling 1 + eps_high
  int g_initial = 8;       // full rollouts per prompt
  int k_top = 4;           // entropy-sensitive positions per base trajectory
  int m_explore = 8;       // rollouts per intermediate state
  int max_len = 32;        // generated-token cap, shared by all rollouts
  int feature_dim = 4096;
  int context_window = 4;
  int eval_every = 10;          // greedy evaluation cadence in steps
  int attempts_factor = 10;     // per-step prompt budget = factor * batch_size
  bool include_initial_group = true;  // train on the initial full rollouts too
  int checkpoint_every = 0;     // 0 = initial and final checkpoints only
  int log_records_every = 1;    // exploration-record logging cadence; 0 = never
};

/// Throws std::invalid_argument describing every violated constraint.
void validate_config(const TrainConfig& config);

/**
 * Flat key=value config parser ('#' starts a comment).  Unknown keys are
 * rejected so typos cannot silently fall back to defaults.
 */
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);

/// Canonical serialization; equal configs produce equal text.
std::string config_to_text(const TrainConfig& config);

/// FNV-1a hash of the canonical text, as 16 hex characters.
std::string config_hash(const TrainConfig& config);

/// Content hash of a task suite; identifies the suite in run metadata.
std::string suite_hash(const std::vector<TaskInstance>& suite);

/**
 * Rejection-sampling gate: returns true when the group's rewards are mixed
 * and the prompt should be kept.  Uniform all-0 or all-1 groups carry no
 * learning signal for group-relative advantages.  Throws
 * std::invalid_argument with fewer than 2 rewards.
 */
bool reject_degenerate(const std::vector<int>& rewards);

/// Importance ratio exp(new_logprob - old_logprob).
double ratio(double new_logprob, double old_logprob);

/**
 * Clip-higher surrogate
 *   min(r * A, clip(r, 1 - eps_low, 1 + eps_high) * A)
 * with an asymmetric band (the ceiling sits further from 1 than the floor)
 * so low-probability tokens keep head-room to grow.
 */
double clip_surrogate(double ratio_value, double advantage, double eps_low,
                      double eps_high);

/// One token's training contribution.
struct TrainSample {
  ContextFeatures features;
  int token = 0;
  double old_logprob = 0.0;
  double advantage = 0.0;
  std::string source_id;  // task the token came from, for provenance audits
};

struct TrainBatch {
  int target_prompts = 0;
  int accepted_prompts = 0;
  int attempts = 0;
  std::vector<TrainSample> samples;

  bool complete() const { return accepted_prompts >= target_prompts; }
};

/// Everything one prompt attempt produced.
struct CollectResult {
  bool accepted = false;
  std::vector<TrainSample> samples;
  std::optional<ExplorationRecord> record;  // present for FR3E prompts
  RolloutGroup initial_group;               // the G full rollouts
};

/**
 * FR3E collection for one prompt: G full rollouts, rejection gate, base
 * selection (first reward-1 rollout), exploration, and sample construction.
 * The initial full-rollout group trains as group 0 with alpha = 1 (omitted
 * when include_initial_group is off); every exploration rollout contributes
 * its continuation tokens with advantage alpha_j * (r - V(S_j)).
 */
CollectResult fr3e_collect(const TaskInstance& task, const Vocabulary& vocab,
                           const PolicyParams& params,
                           const Featurizer& featurizer,
                           const TrainConfig& config, Rng& rng);

/// GRPO++ collection: G full rollouts, rejection gate, group-normalized
/// advantages broadcast to every token of each rollout.
CollectResult grpo_collect(const TaskInstance& task, const Vocabulary& vocab,
                           const PolicyParams& params,
                           const Featurizer& featurizer,
                           const TrainConfig& config, Rng& rng);

/// Folds one attempt into the batch: the attempt counter always advances,
/// samples and the accepted-prompt count only for accepted prompts.
void accumulate(TrainBatch& batch, CollectResult&& result);

/// Loss, gradient, and clip statistics of one mini-batch.
struct LossResult {
  double loss = 0.0;
  WeightDelta grad;  // d loss / d weights
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

/**
 * Mean clip-higher loss over the samples under the given parameters:
 * loss = -(1/N) sum surrogate.  Samples whose surrogate selected the clipped
 * constant branch contribute zero gradient.  Throws std::runtime_error with
 * diagnostics when the loss is non-finite.
 */
LossResult policy_loss(std::span<const TrainSample> samples,
                       const PolicyParams& params, double eps_low,
                       double eps_high);

struct StepResult {
  PolicyParams params;
  double loss = 0.0;
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
};

/**
 * One optimization step: deterministic shuffle (a function of config seed
 * and the parameter version), one pass of mini-batch gradient descent on the
 * clip-higher loss, and aggregated statistics.  The input parameters are
 * untouched; on any error the returned update is discarded wholesale.
 */
StepResult train_step(const TrainBatch& batch, const PolicyParams& params,
                      const TrainConfig& config);

using StepObserver =
    std::function<void(const StepStats&, const std::vector<ExplorationRecord>&)>;

/**
 * Full training run.  Each step collects a rejection-sampled batch from the
 * training suite (bounded by the attempts budget; budget exhaustion ends
 * the run), applies train_step, evaluates greedy solve rate on the eval
 * suite on the eval cadence, and reports a StepStats row.  When
 * checkpoint_dir is non-empty the initial, cadenced, and final parameters
 * are serialized there.  The observer, when set, sees every step's stats
 * and its logged exploration records as they happen, so partial output
 * survives a mid-run error.
 */
MetricsHistory run_training(const TrainConfig& config, const Vocabulary& vocab,
                            const std::vector<TaskInstance>& train_suite,
                            const std::vector<TaskInstance>& eval_suite,
                            const StepObserver& observer = {},
                            const std::string& checkpoint_dir = "");

/// Fraction of eval prompts whose greedy decode the verifier accepts.
double evaluate_solve_rate(const PolicyParams& params,
                           const Featurizer& featurizer,
                           const Vocabulary& vocab,
                           const std::vector<TaskInstance>& eval_suite,
                           int max_len);

}  // namespace fr3e
