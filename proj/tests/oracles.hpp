#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "fr3e/token_mdp.hpp"

// ============================================================================
// Independent oracles used by the tests.  Everything here is deliberately
// written with different algorithms and data layouts than the library code
// it checks, so agreement is evidence rather than tautology.
// ============================================================================

namespace fr3e_oracles {

/**
 * Reference verifier built on strings: render the generated sequence to a
 * symbol string, require that it ends with the <eos> symbol, and match the
 * trailing digit run with plain character scanning.
 */
inline int verify_by_string(const fr3e::TaskInstance& task,
                            const std::vector<int>& generated, bool ended_by_eos,
                            const fr3e::Vocabulary& vocab) {
  if (!ended_by_eos) return 0;
  std::string text;
  for (int t : generated) text += vocab.symbols[static_cast<size_t>(t)] + "\x1f";
  const std::string eos_unit = vocab.symbols[static_cast<size_t>(vocab.eos)] + "\x1f";
  if (text.size() < eos_unit.size() ||
      text.compare(text.size() - eos_unit.size(), eos_unit.size(), eos_unit) != 0)
    return 0;
  text.erase(text.size() - eos_unit.size());

  // Collect trailing single-character digit units.
  std::vector<char> digits;
  while (text.size() >= 2 && text[text.size() - 1] == '\x1f' &&
         text[text.size() - 2] >= '0' && text[text.size() - 2] <= '9') {
    digits.push_back(text[text.size() - 2]);
    text.erase(text.size() - 2);
  }
  if (digits.empty() || digits.size() > 12) return 0;
  std::reverse(digits.begin(), digits.end());
  long long value = 0;
  for (char c : digits) value = value * 10 + (c - '0');
  return value == task.target ? 1 : 0;
}

/**
 * Exact probability that a uniformly random generator solves the task
 * within max_len tokens.  Dynamic program over the trailing-digit-run
 * automaton: the state is (run value, run length), where the value
 * saturates once it exceeds any representable target and the length caps
 * at 13 (runs longer than 12 digits are rejected by the verifier).
 */
inline double uniform_solve_probability(long long target, int vocab_size,
                                        int digit_count, int other_count,
                                        int max_len) {
  constexpr int kValueCap = 1000;      // targets are far below this
  constexpr int kOver = kValueCap;     // saturated value bucket
  constexpr int kEmpty = kValueCap + 1;
  constexpr int kMaxRun = 13;          // 13 == "longer than 12" bucket

  const double p_tok = 1.0 / static_cast<double>(vocab_size);
  const double p_other = static_cast<double>(other_count) * p_tok;

  // dist[value][run_len]
  std::vector<std::vector<double>> dist(
      kValueCap + 2, std::vector<double>(kMaxRun + 1, 0.0));
  dist[kEmpty][0] = 1.0;

  double success = 0.0;
  for (int t = 0; t < max_len; ++t) {
    // <eos> chance from every accepting state.
    if (target >= 0 && target < kValueCap) {
      for (int len = 1; len <= 12; ++len)
        success += dist[static_cast<size_t>(target)][static_cast<size_t>(len)] * p_tok;
    }

    std::vector<std::vector<double>> next(
        kValueCap + 2, std::vector<double>(kMaxRun + 1, 0.0));
    for (int value = 0; value <= kEmpty; ++value) {
      for (int len = 0; len <= kMaxRun; ++len) {
        double p = dist[static_cast<size_t>(value)][static_cast<size_t>(len)];
        if (p == 0.0) continue;
        // Non-digit, non-eos tokens reset the run.
        next[kEmpty][0] += p * p_other;
        // Each digit extends the run.
        int new_len = std::min(len + 1, kMaxRun);
        for (int d = 0; d < digit_count; ++d) {
          int new_value;
          if (value == kEmpty) {
            new_value = d;
          } else if (value == kOver) {
            new_value = kOver;
          } else {
            long long grown = static_cast<long long>(value) * 10 + d;
            new_value = grown >= kValueCap ? kOver : static_cast<int>(grown);
          }
          next[static_cast<size_t>(new_value)][static_cast<size_t>(new_len)] += p * p_tok;
        }
      }
    }
    dist.swap(next);
  }
  return success;
}

/**
 * Brute-force enumeration of every generation outcome up to max_len tokens
 * under a uniform policy, accumulating the probability mass of sequences
 * the reference string verifier accepts.  Exponential; only for tiny caps.
 */
inline double enumerate_solve_probability(const fr3e::TaskInstance& task,
                                          const fr3e::Vocabulary& vocab,
                                          int max_len) {
  const int v = vocab.size();
  const double p_tok = 1.0 / static_cast<double>(v);
  double success = 0.0;
  std::vector<int> seq;

  auto recurse = [&](auto&& self, double mass) -> void {
    if (static_cast<int>(seq.size()) >= max_len) return;  // cap: reward 0
    for (int tok = 0; tok < v; ++tok) {
      seq.push_back(tok);
      if (tok == vocab.eos) {
        success += mass * p_tok *
                   static_cast<double>(verify_by_string(task, seq, true, vocab));
      } else {
        self(self, mass * p_tok);
      }
      seq.pop_back();
    }
  };
  recurse(recurse, 1.0);
  return success;
}

/// Top-k selection by repeated linear scans with strict-greater updates, so
/// ties resolve to the earliest position.  Returns ascending 1-based indices.
inline std::vector<int> topk_by_scan(const std::vector<double>& values, int k) {
  const int n = static_cast<int>(values.size());
  k = std::min(k, n);
  std::vector<bool> used(values.size(), false);
  std::vector<int> picked;
  for (int round = 0; round < k; ++round) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (used[static_cast<size_t>(i)]) continue;
      if (best < 0 || values[static_cast<size_t>(i)] > values[static_cast<size_t>(best)])
        best = i;
    }
    used[static_cast<size_t>(best)] = true;
    picked.push_back(best + 1);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Piecewise reference for the clip-higher surrogate, written as explicit
/// branches instead of min/clamp composition.
inline double clip_reference(double r, double a, double eps_low,
                             double eps_high) {
  double clipped = r;
  if (clipped < 1.0 - eps_low) clipped = 1.0 - eps_low;
  if (clipped > 1.0 + eps_high) clipped = 1.0 + eps_high;
  double unclipped_term = r * a;
  double clipped_term = clipped * a;
  return unclipped_term < clipped_term ? unclipped_term : clipped_term;
}

}  // namespace fr3e_oracles
