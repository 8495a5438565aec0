#include "fr3e/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fr3e/util.hpp"

namespace fr3e {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ============================================================================
// Configuration
// ============================================================================

void validate_config(const TrainConfig& c) {
  std::vector<std::string> problems;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };

  require(c.algorithm == "fr3e" || c.algorithm == "grpo++",
          "algorithm must be 'fr3e' or 'grpo++'");
  require(c.max_steps >= 0, "max_steps must be >= 0");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.mini_batch >= 1 && c.mini_batch <= c.batch_size,
          "mini_batch must lie in [1, batch_size]");
  require(std::isfinite(c.lr) && c.lr > 0.0, "lr must be positive");
  require(c.eps_low > 0.0 && c.eps_low < 1.0, "eps_low must lie in (0, 1)");
  require(std::isfinite(c.eps_high) && c.eps_high > 0.0,
          "eps_high must be positive");
  require(c.g_initial >= 2, "g_initial must be >= 2");
  require(c.k_top >= 0, "k_top must be >= 0");
  require(c.m_explore >= 1, "m_explore must be >= 1");
  require(c.max_len >= 2, "max_len must be >= 2");
  require(c.feature_dim >= 2, "feature_dim must be >= 2");
  require(c.context_window >= 1, "context_window must be >= 1");
  require(c.eval_every >= 1, "eval_every must be >= 1");
  require(c.attempts_factor >= 1, "attempts_factor must be >= 1");
  require(c.checkpoint_every >= 0, "checkpoint_every must be >= 0");
  require(c.log_records_every >= 0, "log_records_every must be >= 0");

  if (!problems.empty()) {
    std::string message = "invalid config:";
    for (const std::string& p : problems) message += " " + p + ";";
    throw std::invalid_argument(message);
  }
}

namespace {

long long parse_int_field(const std::string& key, const std::string& value) {
  size_t used = 0;
  long long parsed = 0;
  try {
    parsed = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + value);
  }
  if (used != value.size())
    throw std::invalid_argument("config: bad integer for " + key + ": " + value);
  return parsed;
}

double parse_double_field(const std::string& key, const std::string& value) {
  size_t used = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(value, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + value);
  }
  if (used != value.size())
    throw std::invalid_argument("config: bad number for " + key + ": " + value);
  return parsed;
}

bool parse_bool_field(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + value);
}

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not key=value: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw std::invalid_argument("config: duplicate key: " + key);

    if (key == "algorithm") config.algorithm = value;
    else if (key == "seed")
      config.seed = static_cast<uint64_t>(parse_int_field(key, value));
    else if (key == "max_steps")
      config.max_steps = static_cast<int>(parse_int_field(key, value));
    else if (key == "batch_size")
      config.batch_size = static_cast<int>(parse_int_field(key, value));
    else if (key == "mini_batch")
      config.mini_batch = static_cast<int>(parse_int_field(key, value));
    else if (key == "lr") config.lr = parse_double_field(key, value);
    else if (key == "eps_low") config.eps_low = parse_double_field(key, value);
    else if (key == "eps_high") config.eps_high = parse_double_field(key, value);
    else if (key == "g_initial")
      config.g_initial = static_cast<int>(parse_int_field(key, value));
    else if (key == "k_top")
      config.k_top = static_cast<int>(parse_int_field(key, value));
    else if (key == "m_explore")
      config.m_explore = static_cast<int>(parse_int_field(key, value));
    else if (key == "max_len")
      config.max_len = static_cast<int>(parse_int_field(key, value));
    else if (key == "feature_dim")
      config.feature_dim = static_cast<int>(parse_int_field(key, value));
    else if (key == "context_window")
      config.context_window = static_cast<int>(parse_int_field(key, value));
    else if (key == "eval_every")
      config.eval_every = static_cast<int>(parse_int_field(key, value));
    else if (key == "attempts_factor")
      config.attempts_factor = static_cast<int>(parse_int_field(key, value));
    else if (key == "include_initial_group")
      config.include_initial_group = parse_bool_field(key, value);
    else if (key == "checkpoint_every")
      config.checkpoint_every = static_cast<int>(parse_int_field(key, value));
    else if (key == "log_records_every")
      config.log_records_every = static_cast<int>(parse_int_field(key, value));
    else
      throw std::invalid_argument("config: unknown key: " + key);
  }
  validate_config(config);
  return config;
}

TrainConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_config_file: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream out;
  out << "algorithm = " << c.algorithm << '\n';
  out << "seed = " << c.seed << '\n';
  out << "max_steps = " << c.max_steps << '\n';
  out << "batch_size = " << c.batch_size << '\n';
  out << "mini_batch = " << c.mini_batch << '\n';
  out << "lr = " << format_double(c.lr) << '\n';
  out << "eps_low = " << format_double(c.eps_low) << '\n';
  out << "eps_high = " << format_double(c.eps_high) << '\n';
  out << "g_initial = " << c.g_initial << '\n';
  out << "k_top = " << c.k_top << '\n';
  out << "m_explore = " << c.m_explore << '\n';
  out << "max_len = " << c.max_len << '\n';
  out << "feature_dim = " << c.feature_dim << '\n';
  out << "context_window = " << c.context_window << '\n';
  out << "eval_every = " << c.eval_every << '\n';
  out << "attempts_factor = " << c.attempts_factor << '\n';
  out << "include_initial_group = "
      << (c.include_initial_group ? "true" : "false") << '\n';
  out << "checkpoint_every = " << c.checkpoint_every << '\n';
  out << "log_records_every = " << c.log_records_every << '\n';
  return out.str();
}

std::string config_hash(const TrainConfig& config) {
  return to_hex(fnv1a(config_to_text(config)));
}

std::string suite_hash(const std::vector<TaskInstance>& suite) {
  uint64_t h = kFnvOffset;
  for (const TaskInstance& task : suite) {
    h = fnv1a(task_to_line(task), h);
    h = fnv1a("\n", h);
  }
  return to_hex(h);
}

// ============================================================================
// Surrogate pieces
// ============================================================================

bool reject_degenerate(const std::vector<int>& rewards) {
  if (rewards.size() < 2)
    throw std::invalid_argument(
        "reject_degenerate: need at least 2 rollouts to judge reward spread");
  for (int r : rewards)
    if (r != 0 && r != 1)
      throw std::invalid_argument("reject_degenerate: reward must be binary");
  for (size_t i = 1; i < rewards.size(); ++i)
    if (rewards[i] != rewards[0]) return true;
  return false;
}

double ratio(double new_logprob, double old_logprob) {
  double r = std::exp(new_logprob - old_logprob);
  if (!std::isfinite(r))
    throw std::runtime_error("ratio: non-finite importance ratio");
  return r;
}

double clip_surrogate(double ratio_value, double advantage, double eps_low,
                      double eps_high) {
  double clipped = std::clamp(ratio_value, 1.0 - eps_low, 1.0 + eps_high);
  return std::min(ratio_value * advantage, clipped * advantage);
}

// ============================================================================
// Collection
// ============================================================================

namespace {

/// Emits one TrainSample per generated token of the trajectory, with the
/// features recomputed at each prefix exactly as during generation.
void append_samples(std::vector<TrainSample>& out, const Trajectory& traj,
                    double advantage, const Featurizer& featurizer) {
  std::vector<int> full = traj.context;
  for (size_t i = 0; i < traj.tokens.size(); ++i) {
    std::span<const int> prompt_span(full.data(),
                                     static_cast<size_t>(traj.prompt_len));
    std::span<const int> gen_span(
        full.data() + traj.prompt_len,
        full.size() - static_cast<size_t>(traj.prompt_len));
    TrainSample sample;
    sample.features = featurizer.features(prompt_span, gen_span);
    sample.token = traj.tokens[i];
    sample.old_logprob = traj.logprobs[i];
    sample.advantage = advantage;
    sample.source_id = traj.task_id;
    out.push_back(std::move(sample));
    full.push_back(traj.tokens[i]);
  }
}

RolloutGroup roll_initial_group(const TaskInstance& task,
                                const Vocabulary& vocab,
                                const PolicyParams& params,
                                const Featurizer& featurizer,
                                const TrainConfig& config, Rng& rng) {
  RolloutGroup group;
  group.state_index = 0;
  group.rollouts.reserve(static_cast<size_t>(config.g_initial));
  for (int g = 0; g < config.g_initial; ++g)
    group.rollouts.push_back(
        generate(params, featurizer, task, config.max_len, rng));
  group.rewards = score_group(task, vocab, group.rollouts);
  for (size_t i = 0; i < group.rollouts.size(); ++i)
    group.rollouts[i].reward = group.rewards[i];
  group.value = empirical_value(group.rewards);
  return group;
}

}  // namespace

CollectResult fr3e_collect(const TaskInstance& task, const Vocabulary& vocab,
                           const PolicyParams& params,
                           const Featurizer& featurizer,
                           const TrainConfig& config, Rng& rng) {
  CollectResult result;
  result.initial_group =
      roll_initial_group(task, vocab, params, featurizer, config, rng);
  if (!reject_degenerate(result.initial_group.rewards)) return result;
  result.accepted = true;

  size_t base_index = 0;
  while (result.initial_group.rewards[base_index] != 1) ++base_index;
  const Trajectory& base = result.initial_group.rollouts[base_index];

  ExploreParams explore{config.k_top, config.m_explore, config.max_len};
  ExplorationRecord record = explore_prompt(
      task, vocab, params, featurizer, base, result.initial_group, explore, rng);

  if (config.include_initial_group) {
    for (size_t i = 0; i < result.initial_group.rollouts.size(); ++i)
      append_samples(result.samples, result.initial_group.rollouts[i],
                     raw_advantage(result.initial_group.rewards[i],
                                   record.values[0]),
                     featurizer);
  }
  for (size_t j = 1; j < record.groups.size(); ++j) {
    const RolloutGroup& group = record.groups[j];
    for (size_t m = 0; m < group.rollouts.size(); ++m) {
      double advantage = modulate(
          record.alphas[j], raw_advantage(group.rewards[m], group.value));
      append_samples(result.samples, group.rollouts[m], advantage, featurizer);
    }
  }
  result.record = std::move(record);
  return result;
}

CollectResult grpo_collect(const TaskInstance& task, const Vocabulary& vocab,
                           const PolicyParams& params,
                           const Featurizer& featurizer,
                           const TrainConfig& config, Rng& rng) {
  CollectResult result;
  result.initial_group =
      roll_initial_group(task, vocab, params, featurizer, config, rng);
  if (!reject_degenerate(result.initial_group.rewards)) return result;
  result.accepted = true;

  std::vector<double> advantages =
      grpo_group_advantage(result.initial_group.rewards);
  for (size_t i = 0; i < result.initial_group.rollouts.size(); ++i)
    append_samples(result.samples, result.initial_group.rollouts[i],
                   advantages[i], featurizer);
  return result;
}

void accumulate(TrainBatch& batch, CollectResult&& result) {
  ++batch.attempts;
  if (!result.accepted) return;
  ++batch.accepted_prompts;
  std::move(result.samples.begin(), result.samples.end(),
            std::back_inserter(batch.samples));
}

// ============================================================================
// Optimization
// ============================================================================

LossResult policy_loss(std::span<const TrainSample> samples,
                       const PolicyParams& params, double eps_low,
                       double eps_high) {
  if (samples.empty())
    throw std::invalid_argument("policy_loss: empty sample span");

  LossResult result;
  result.grad.values.assign(params.weights.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  const int vocab_size = params.vocab_size;

  double surrogate_sum = 0.0;
  double ratio_sum = 0.0;
  int clipped_count = 0;

  for (const TrainSample& sample : samples) {
    Evaluation ev = evaluate(params, sample.features);
    double new_logprob = ev.log_prob(sample.token);
    double r = ratio(new_logprob, sample.old_logprob);
    double clipped_r = std::clamp(r, 1.0 - eps_low, 1.0 + eps_high);
    double unclipped = r * sample.advantage;
    double clipped = clipped_r * sample.advantage;
    surrogate_sum += std::min(unclipped, clipped);
    ratio_sum += r;

    if (clipped < unclipped) {
      // The surrogate selected the clipped constant branch: no gradient.
      ++clipped_count;
      continue;
    }
    double scale = -inv_n * sample.advantage * r;
    for (int32_t f : sample.features.idx) {
      double* grad_row =
          result.grad.values.data() + static_cast<size_t>(f) * vocab_size;
      const double* probs = ev.dist.probs.data();
      for (int v = 0; v < vocab_size; ++v)
        grad_row[v] +=
            scale * ((v == sample.token ? 1.0 : 0.0) - probs[v]);
    }
  }

  result.loss = -surrogate_sum * inv_n;
  result.mean_ratio = ratio_sum * inv_n;
  result.clip_fraction = static_cast<double>(clipped_count) * inv_n;
  if (!std::isfinite(result.loss)) {
    std::ostringstream what;
    what << "policy_loss: non-finite loss over " << samples.size()
         << " samples (surrogate sum " << surrogate_sum << ")";
    throw std::runtime_error(what.str());
  }
  return result;
}

StepResult train_step(const TrainBatch& batch, const PolicyParams& params,
                      const TrainConfig& config) {
  if (!batch.complete())
    throw std::invalid_argument("train_step: batch is not complete");
  if (batch.samples.empty())
    throw std::invalid_argument("train_step: batch has no samples");
  for (double w : params.weights)
    if (!std::isfinite(w))
      throw std::invalid_argument("train_step: non-finite parameters");

  // Deterministic shuffle keyed on (seed, parameter version): re-running the
  // same step on the same snapshot reproduces the identical permutation.
  std::vector<TrainSample> shuffled = batch.samples;
  Rng shuffle_rng(fnv1a_u64(params.version, fnv1a_u64(config.seed)));
  for (size_t i = shuffled.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int>(i)));
    std::swap(shuffled[i - 1], shuffled[j]);
  }

  // mini_batch counts prompts; scale it into sample space so a step still
  // performs batch_size / mini_batch gradient updates.
  size_t chunk = std::max<size_t>(
      1, shuffled.size() * static_cast<size_t>(config.mini_batch) /
             static_cast<size_t>(config.batch_size));

  StepResult result;
  PolicyParams current = params;
  double loss_acc = 0.0;
  double ratio_acc = 0.0;
  double clip_acc = 0.0;
  const double total = static_cast<double>(shuffled.size());

  for (size_t begin = 0; begin < shuffled.size(); begin += chunk) {
    size_t len = std::min(chunk, shuffled.size() - begin);
    std::span<const TrainSample> slice(shuffled.data() + begin, len);
    LossResult loss = policy_loss(slice, current, config.eps_low,
                                  config.eps_high);

    WeightDelta delta;
    delta.values.resize(loss.grad.values.size());
    for (size_t i = 0; i < delta.values.size(); ++i)
      delta.values[i] = -config.lr * loss.grad.values[i];
    current = apply_update(current, delta);

    double w = static_cast<double>(len);
    loss_acc += w * loss.loss;
    ratio_acc += w * loss.mean_ratio;
    clip_acc += w * loss.clip_fraction;
  }

  double adv_sum = 0.0;
  for (const TrainSample& s : batch.samples) adv_sum += s.advantage;
  double adv_mean = adv_sum / total;
  double adv_var = 0.0;
  for (const TrainSample& s : batch.samples) {
    double d = s.advantage - adv_mean;
    adv_var += d * d;
  }

  result.params = std::move(current);
  result.loss = loss_acc / total;
  result.mean_ratio = ratio_acc / total;
  result.clip_fraction = clip_acc / total;
  result.adv_mean = adv_mean;
  result.adv_std = std::sqrt(adv_var / total);
  return result;
}

// ============================================================================
// Full runs
// ============================================================================

double evaluate_solve_rate(const PolicyParams& params,
                           const Featurizer& featurizer,
                           const Vocabulary& vocab,
                           const std::vector<TaskInstance>& eval_suite,
                           int max_len) {
  if (eval_suite.empty()) return 0.0;
  int solved = 0;
  for (const TaskInstance& task : eval_suite) {
    Trajectory traj = greedy_decode(params, featurizer, task, max_len);
    solved += verify(task, traj, vocab);
  }
  return static_cast<double>(solved) / static_cast<double>(eval_suite.size());
}

namespace {

std::string checkpoint_name(int step_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06d.ckpt", step_index);
  return buf;
}

}  // namespace

MetricsHistory run_training(const TrainConfig& config, const Vocabulary& vocab,
                            const std::vector<TaskInstance>& train_suite,
                            const std::vector<TaskInstance>& eval_suite,
                            const StepObserver& observer,
                            const std::string& checkpoint_dir) {
  validate_config(config);
  if (train_suite.empty())
    throw std::invalid_argument("run_training: empty training suite");

  Featurizer featurizer{vocab, config.feature_dim, config.context_window};
  PolicyParams params = PolicyParams::zeros(config.feature_dim, vocab.size());

  MetricsHistory history;
  history.meta.algorithm = config.algorithm;
  history.meta.seed = config.seed;
  history.meta.config_hash = config_hash(config);
  history.meta.suite_hash = suite_hash(train_suite);

  const bool use_fr3e = config.algorithm == "fr3e";
  auto save = [&](const std::string& name) {
    if (checkpoint_dir.empty()) return;
    namespace fs = std::filesystem;
    fs::create_directories(checkpoint_dir);
    save_checkpoint(params, (fs::path(checkpoint_dir) / name).string());
  };
  save(checkpoint_name(0));

  Rng rng(config.seed);
  const int budget = config.attempts_factor * config.batch_size;
  double last_solve_rate = 0.0;

  for (int step_index = 1; step_index <= config.max_steps; ++step_index) {
    TrainBatch batch;
    batch.target_prompts = config.batch_size;
    std::vector<ExplorationRecord> records;

    double entropy_sum = 0.0;
    double entropy_tokens = 0.0;
    double length_sum = 0.0;
    int length_count = 0;
    int64_t all_right = 0;
    int64_t all_wrong = 0;

    const bool log_records =
        config.log_records_every > 0 &&
        step_index % config.log_records_every == 0;

    while (!batch.complete() && batch.attempts < budget) {
      const TaskInstance& task =
          train_suite[rng.uniform_int(static_cast<int>(train_suite.size()))];
      CollectResult result =
          use_fr3e
              ? fr3e_collect(task, vocab, params, featurizer, config, rng)
              : grpo_collect(task, vocab, params, featurizer, config, rng);

      if (result.accepted) {
        for (const Trajectory& traj : result.initial_group.rollouts) {
          for (double h : traj.entropies) {
            entropy_sum += h;
            entropy_tokens += 1.0;
          }
          length_sum += static_cast<double>(traj.tokens.size());
          ++length_count;
        }
        if (result.record) {
          auto [right, wrong] = count_group_extremes(result.record->groups);
          all_right += right;
          all_wrong += wrong;
          if (log_records) records.push_back(std::move(*result.record));
        } else {
          auto [right, wrong] =
              count_group_extremes({result.initial_group});
          all_right += right;
          all_wrong += wrong;
        }
      }
      accumulate(batch, std::move(result));
    }

    // Attempts budget exhausted before the batch filled: the policy has
    // saturated the rejection gate, so the run ends here.
    if (!batch.complete()) break;

    StepResult step_result = train_step(batch, params, config);
    params = std::move(step_result.params);

    if (step_index == 1 || step_index % config.eval_every == 0)
      last_solve_rate = evaluate_solve_rate(params, featurizer, vocab,
                                            eval_suite, config.max_len);

    StepStats stats;
    stats.step = step_index;
    stats.loss = step_result.loss;
    stats.mean_token_entropy =
        entropy_tokens > 0.0 ? entropy_sum / entropy_tokens : 0.0;
    stats.adv_mean = step_result.adv_mean;
    stats.adv_std = step_result.adv_std;
    stats.clip_fraction = step_result.clip_fraction;
    stats.mean_ratio = step_result.mean_ratio;
    stats.mean_response_length =
        length_count > 0 ? length_sum / static_cast<double>(length_count) : 0.0;
    stats.all_right_count = all_right;
    stats.all_wrong_count = all_wrong;
    stats.solve_rate = last_solve_rate;

    history.steps.push_back(stats);
    if (observer) observer(stats, records);

    if (config.checkpoint_every > 0 &&
        step_index % config.checkpoint_every == 0)
      save(checkpoint_name(step_index));
  }

  save("final.ckpt");
  return history;
}

}  // namespace fr3e
