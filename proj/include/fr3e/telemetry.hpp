#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fr3e/explore.hpp"

namespace fr3e {

// ============================================================================
// Training telemetry: per-step statistics, exportable metric tables, and
// run-to-run comparison.  The CSV column set and order are part of the
// external contract; plotting scripts key on them.
// ============================================================================

struct StepStats {
  int64_t step = 0;
  double loss = 0.0;
  double mean_token_entropy = 0.0;  // nats
  double adv_mean = 0.0;
  double adv_std = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double mean_response_length = 0.0;
  int64_t all_right_count = 0;
  int64_t all_wrong_count = 0;
  double solve_rate = 0.0;
};

/// Column order of the exported metrics table.
std::vector<std::string> step_stats_columns();

struct RunMetadata {
  std::string algorithm;
  uint64_t seed = 0;
  std::string config_hash;
  std::string suite_hash;
};

struct MetricsHistory {
  RunMetadata meta;
  std::vector<StepStats> steps;
};

/**
 * Counts the rollout groups with unanimous rewards: first element of the
 * pair is the All-Right count (V = 1), second the All-Wrong count (V = 0).
 */
std::pair<int64_t, int64_t> count_group_extremes(
    const std::vector<RolloutGroup>& groups);

/**
 * Token-weighted mean of all profiled entropies across the records: a
 * profile of length L contributes L values.  Throws std::invalid_argument
 * when the records carry no profiled tokens.
 */
double batch_entropy(const std::vector<ExplorationRecord>& records);

/**
 * Writes metrics.csv (one row per step, columns as step_stats_columns()),
 * metadata.json, and per-series plot files under <dir>/series/.  Exports of
 * the same history are byte-identical.  Throws on an empty history.
 */
void export_metrics(const MetricsHistory& history, const std::string& dir);

/// Re-reads an exported run directory; field-for-field equal to the source.
MetricsHistory load_metrics(const std::string& dir);

struct MetricSummary {
  std::string name;
  double final_a = 0.0;
  double final_b = 0.0;
  double delta = 0.0;  // a - b
};

struct Comparison {
  bool fairness_warning = false;      // seed or suite mismatch
  bool partial_alignment = false;     // step ranges differ
  std::vector<int64_t> steps;         // aligned steps
  std::vector<MetricSummary> summary; // final-window means (last 10% of steps)
  std::vector<StepStats> a;
  std::vector<StepStats> b;
};

/// Aligns two histories on common steps and summarizes final-window means.
Comparison compare(const MetricsHistory& a, const MetricsHistory& b);

/// Per-step comparison table (CSV: step, <metric>_a, <metric>_b, <metric>_delta).
void write_comparison(const Comparison& comparison, const std::string& path);

/// Human-readable final-window summary with fairness warnings.
std::string comparison_summary_text(const Comparison& comparison);

}  // namespace fr3e
