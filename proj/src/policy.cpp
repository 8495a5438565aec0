#include "fr3e/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "fr3e/util.hpp"

namespace fr3e {

namespace {

int32_t bucket(uint64_t h, int feature_dim) {
  // Index 0 is reserved for the bias feature.
  return 1 + static_cast<int32_t>(h % static_cast<uint64_t>(feature_dim - 1));
}

uint64_t hash_tag(std::string_view tag, uint64_t value) {
  return fnv1a_u64(value, fnv1a(tag));
}

}  // namespace

ContextFeatures Featurizer::features(std::span<const int> prompt,
                                     std::span<const int> generated) const {
  ContextFeatures out;
  out.idx.reserve(static_cast<size_t>(5 + window));
  out.idx.push_back(0);

  uint64_t digit_sum = 0;
  uint64_t digit_count = 0;
  uint64_t signature = kFnvOffset;
  for (int token : prompt) {
    int value = vocab.digit_value(token);
    if (value >= 0) {
      digit_sum += static_cast<uint64_t>(value);
      ++digit_count;
    }
    signature = fnv1a_u64(static_cast<uint64_t>(token), signature);
  }
  out.idx.push_back(bucket(hash_tag("dsum", digit_sum), feature_dim));
  out.idx.push_back(bucket(hash_tag("opc", digit_count), feature_dim));
  out.idx.push_back(bucket(fnv1a("sig", signature), feature_dim));

  size_t total = prompt.size() + generated.size();
  for (int n = 1; n <= window; ++n) {
    if (total < static_cast<size_t>(n)) break;
    uint64_t h = fnv1a_u64(static_cast<uint64_t>(n), fnv1a("ng"));
    for (size_t i = total - static_cast<size_t>(n); i < total; ++i) {
      int token = i < prompt.size() ? prompt[i] : generated[i - prompt.size()];
      h = fnv1a_u64(static_cast<uint64_t>(token), h);
    }
    out.idx.push_back(bucket(h, feature_dim));
  }

  out.idx.push_back(bucket(hash_tag("len", generated.size()), feature_dim));
  return out;
}

ContextFeatures featurize(const Featurizer& featurizer, const GenState& state) {
  return featurizer.features(state.prompt, state.generated);
}

PolicyParams PolicyParams::zeros(int feature_dim, int vocab_size) {
  if (feature_dim < 2 || vocab_size < 2)
    throw std::invalid_argument("PolicyParams::zeros: degenerate shape");
  PolicyParams p;
  p.feature_dim = feature_dim;
  p.vocab_size = vocab_size;
  p.version = 0;
  p.weights.assign(static_cast<size_t>(feature_dim) *
                       static_cast<size_t>(vocab_size),
                   0.0);
  return p;
}

Evaluation evaluate(const PolicyParams& params, const ContextFeatures& feats) {
  const int v = params.vocab_size;
  Evaluation ev;
  ev.scores.assign(static_cast<size_t>(v), 0.0);
  for (int32_t f : feats.idx) {
    if (f < 0 || f >= params.feature_dim)
      throw std::invalid_argument("evaluate: feature index out of range");
    const double* row = params.weights.data() + static_cast<size_t>(f) * v;
    for (int t = 0; t < v; ++t) ev.scores[static_cast<size_t>(t)] += row[t];
  }

  ev.max_score = *std::max_element(ev.scores.begin(), ev.scores.end());
  ev.dist.probs.assign(static_cast<size_t>(v), 0.0);
  double sum = 0.0;
  for (int t = 0; t < v; ++t) {
    double e = std::exp(ev.scores[static_cast<size_t>(t)] - ev.max_score);
    ev.dist.probs[static_cast<size_t>(t)] = e;
    sum += e;
  }
  for (double& p : ev.dist.probs) p /= sum;
  ev.log_z = std::log(sum);
  return ev;
}

TokenDistribution token_distribution(const PolicyParams& params,
                                     const ContextFeatures& feats) {
  return evaluate(params, feats).dist;
}

int sample_token(const TokenDistribution& dist, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  const int v = static_cast<int>(dist.probs.size());
  for (int t = 0; t < v; ++t) {
    cum += dist.probs[static_cast<size_t>(t)];
    if (u < cum) return t;
  }
  return v - 1;
}

double log_prob(const PolicyParams& params, const ContextFeatures& feats,
                int token) {
  if (token < 0 || token >= params.vocab_size)
    throw std::invalid_argument("log_prob: token id out of range");
  return evaluate(params, feats).log_prob(token);
}

LogProbGrad grad_log_prob(const PolicyParams& params,
                          const ContextFeatures& feats, int token) {
  if (token < 0 || token >= params.vocab_size)
    throw std::invalid_argument("grad_log_prob: token id out of range");
  Evaluation ev = evaluate(params, feats);
  LogProbGrad grad;
  grad.features = feats;
  grad.coeffs.resize(static_cast<size_t>(params.vocab_size));
  for (int t = 0; t < params.vocab_size; ++t)
    grad.coeffs[static_cast<size_t>(t)] =
        (t == token ? 1.0 : 0.0) - ev.dist.probs[static_cast<size_t>(t)];
  return grad;
}

PolicyParams apply_update(const PolicyParams& params,
                          const WeightDelta& delta) {
  if (delta.values.size() != params.weights.size())
    throw std::invalid_argument("apply_update: delta shape mismatch");
  for (double d : delta.values)
    if (!std::isfinite(d))
      throw std::invalid_argument("apply_update: non-finite delta entry");
  PolicyParams next = params;
  for (size_t i = 0; i < next.weights.size(); ++i)
    next.weights[i] += delta.values[i];
  next.version = params.version + 1;
  return next;
}

namespace {

/**
 * Shared generation loop.  `context` already holds `prompt_len` prompt
 * tokens plus any committed generated prefix; sampling continues until <eos>
 * or until the generated length (prefix included) reaches max_len.  A null
 * rng selects the argmax instead of sampling.
 */
Trajectory run_generation(const PolicyParams& params,
                          const Featurizer& featurizer,
                          const std::string& task_id, std::vector<int> context,
                          int prompt_len, int max_len, Rng* rng) {
  const int prefix_generated = static_cast<int>(context.size()) - prompt_len;
  if (prefix_generated < 0)
    throw std::invalid_argument("run_generation: prompt_len exceeds context");
  if (prefix_generated >= max_len)
    throw std::invalid_argument(
        "run_generation: context already at the generation length cap");
  if (!context.empty() && prefix_generated > 0 &&
      context.back() == featurizer.vocab.eos)
    throw std::invalid_argument("run_generation: context already ended by <eos>");

  Trajectory traj;
  traj.task_id = task_id;
  traj.context = std::move(context);
  traj.prompt_len = prompt_len;

  std::vector<int> full = traj.context;
  int generated_len = prefix_generated;
  while (generated_len < max_len) {
    std::span<const int> prompt_span(full.data(),
                                     static_cast<size_t>(prompt_len));
    std::span<const int> gen_span(full.data() + prompt_len,
                                  full.size() - static_cast<size_t>(prompt_len));
    ContextFeatures feats = featurizer.features(prompt_span, gen_span);
    Evaluation ev = evaluate(params, feats);

    int token = 0;
    if (rng != nullptr) {
      token = sample_token(ev.dist, *rng);
    } else {
      token = static_cast<int>(
          std::max_element(ev.dist.probs.begin(), ev.dist.probs.end()) -
          ev.dist.probs.begin());
    }

    double entropy = 0.0;
    for (double p : ev.dist.probs)
      if (p > 0.0) entropy -= p * std::log(p);

    traj.tokens.push_back(token);
    traj.logprobs.push_back(ev.log_prob(token));
    traj.entropies.push_back(entropy);
    full.push_back(token);
    ++generated_len;
    if (token == featurizer.vocab.eos) {
      traj.ended_by_eos = true;
      break;
    }
  }
  traj.terminated = true;
  return traj;
}

}  // namespace

Trajectory generate(const PolicyParams& params, const Featurizer& featurizer,
                    const TaskInstance& task, int max_len, Rng& rng) {
  return run_generation(params, featurizer, task.id, task.prompt,
                        static_cast<int>(task.prompt.size()), max_len, &rng);
}

Trajectory greedy_decode(const PolicyParams& params,
                         const Featurizer& featurizer, const TaskInstance& task,
                         int max_len) {
  return run_generation(params, featurizer, task.id, task.prompt,
                        static_cast<int>(task.prompt.size()), max_len, nullptr);
}

Trajectory sample_continuation(const PolicyParams& params,
                               const Featurizer& featurizer,
                               const std::string& task_id,
                               std::vector<int> context, int prompt_len,
                               int max_len, Rng& rng) {
  return run_generation(params, featurizer, task_id, std::move(context),
                        prompt_len, max_len, &rng);
}

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'R', '3', 'E', 'P', 'O', 'L', '1'};

}  // namespace

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  uint32_t feature_dim = static_cast<uint32_t>(params.feature_dim);
  uint32_t vocab_size = static_cast<uint32_t>(params.vocab_size);
  uint64_t version = params.version;
  out.write(reinterpret_cast<const char*>(&feature_dim), sizeof(feature_dim));
  out.write(reinterpret_cast<const char*>(&vocab_size), sizeof(vocab_size));
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(params.weights.data()),
            static_cast<std::streamsize>(params.weights.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_checkpoint: bad header: " + path);
  uint32_t feature_dim = 0;
  uint32_t vocab_size = 0;
  uint64_t version = 0;
  in.read(reinterpret_cast<char*>(&feature_dim), sizeof(feature_dim));
  in.read(reinterpret_cast<char*>(&vocab_size), sizeof(vocab_size));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header: " + path);
  PolicyParams params;
  params.feature_dim = static_cast<int>(feature_dim);
  params.vocab_size = static_cast<int>(vocab_size);
  params.version = version;
  params.weights.resize(static_cast<size_t>(feature_dim) * vocab_size);
  in.read(reinterpret_cast<char*>(params.weights.data()),
          static_cast<std::streamsize>(params.weights.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated weights: " + path);
  return params;
}

}  // namespace fr3e
