#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fr3e/rng.hpp"

namespace fr3e {

// ============================================================================
// Token-level generation MDP: vocabulary, generation state, synthetic tasks
// with programmatic binary verifiers, and the trajectory record shared by the
// exploration and training modules.
// ============================================================================

/**
 * Ordered set of distinct token symbols.  Token ids are indices into
 * `symbols`; `eos` is the id of the end-of-sequence token.
 */
struct Vocabulary {
  std::vector<std::string> symbols;
  int eos = -1;

  int size() const { return static_cast<int>(symbols.size()); }

  /// True when the symbol is a single decimal digit.
  bool is_digit(int token) const {
    const std::string& s = symbols[static_cast<size_t>(token)];
    return s.size() == 1 && s[0] >= '0' && s[0] <= '9';
  }

  /// Digit value of a digit token; -1 otherwise.
  int digit_value(int token) const {
    const std::string& s = symbols[static_cast<size_t>(token)];
    if (s.size() == 1 && s[0] >= '0' && s[0] <= '9') return s[0] - '0';
    return -1;
  }

  /**
   * The 16-symbol vocabulary used by the chain-sum task family:
   * digits 0-9, '+', '=', three filler symbols for free-form reasoning
   * tokens, and <eos>.
   */
  static Vocabulary chain_sum();
};

/// Prompt plus the tokens generated so far.
struct GenState {
  std::vector<int> prompt;
  std::vector<int> generated;
};

enum class Difficulty { easy, medium, hard };

std::string difficulty_name(Difficulty d);
Difficulty difficulty_from_name(const std::string& name);

/**
 * One synthetic prompt with enough generator metadata to re-evaluate the
 * verifier: for chain-sum tasks `target` is the sum the answer must encode.
 * Every generated instance is solvable within any generation budget that
 * leaves room for the answer digits plus <eos>.
 */
struct TaskInstance {
  std::string id;
  std::string kind;
  Difficulty difficulty = Difficulty::easy;
  std::vector<int> prompt;
  long long target = 0;
};

/**
 * A generated token sequence together with per-token log-probabilities and
 * (optionally) per-token entropies of the sampling distribution.
 *
 * `context` is the full token prefix the sequence was generated from: for a
 * base trajectory this is just the task prompt, for a partial rollout it is
 * the prompt plus the committed block prefix.  `prompt_len` marks how much
 * of `context` is the original task prompt.  `tokens` holds only the tokens
 * this trajectory generated itself, and `logprobs`/`entropies` align with it.
 */
struct Trajectory {
  std::string task_id;
  std::vector<int> context;
  int prompt_len = 0;
  std::vector<int> tokens;
  std::vector<double> logprobs;
  std::vector<double> entropies;
  bool terminated = false;
  bool ended_by_eos = false;
  std::optional<int> reward;

  /// Tokens generated after the original task prompt, committed prefix
  /// included.  This is the sequence the verifier judges.
  std::vector<int> full_generated() const;
};

/// True when generation must stop: <eos> was emitted or the length cap hit.
bool is_terminal(const GenState& state, const Vocabulary& vocab, int max_len);

/**
 * Applies one generation step.  Throws std::logic_error when the state is
 * already terminal and std::invalid_argument when the token id is out of
 * range.
 */
GenState step(const GenState& state, int token, const Vocabulary& vocab,
              int max_len);

/**
 * Binary verifier.  The answer is the trailing run of digit tokens
 * immediately before the terminating <eos>; the run is parsed as a decimal
 * integer (leading zeros allowed) and compared against the task target.
 * Everything before the answer run is ignored, so any number of free-form
 * reasoning tokens is acceptable.  Sequences that hit the length cap without
 * emitting <eos> score 0.  Throws std::invalid_argument when the trajectory
 * is not terminated or does not belong to the task.
 */
int verify(const TaskInstance& task, const Trajectory& traj,
           const Vocabulary& vocab);

/**
 * Deterministically generates `n` task instances of the given kind.
 * Kinds: "chain-sum" (mixed difficulty), "chain-sum-easy",
 * "chain-sum-medium", "chain-sum-hard".  Throws std::invalid_argument for
 * unknown kinds or n < 1.
 */
std::vector<TaskInstance> generate_task_suite(const std::string& kind, int n,
                                              uint64_t seed);

/// Line-delimited task suite serialization; round-trips byte for byte.
void save_task_suite(const std::vector<TaskInstance>& suite,
                     const std::string& path);
std::vector<TaskInstance> load_task_suite(const std::string& path);

std::string task_to_line(const TaskInstance& task);
TaskInstance task_from_line(const std::string& line);

}  // namespace fr3e
