#include "fr3e/first_return.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fr3e {

double token_entropy(const TokenDistribution& dist) {
  if (dist.probs.empty())
    throw std::invalid_argument("token_entropy: empty distribution");
  double sum = 0.0;
  for (double p : dist.probs) {
    if (p < 0.0 || !std::isfinite(p))
      throw std::invalid_argument("token_entropy: invalid probability entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("token_entropy: probabilities do not sum to 1");
  double h = 0.0;
  for (double p : dist.probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

EntropyProfile entropy_profile(const PolicyParams& params,
                               const Featurizer& featurizer,
                               const Trajectory& base) {
  EntropyProfile profile;
  profile.values.reserve(base.tokens.size());

  std::vector<int> full = base.context;
  for (size_t k = 0; k < base.tokens.size(); ++k) {
    std::span<const int> prompt_span(full.data(),
                                     static_cast<size_t>(base.prompt_len));
    std::span<const int> gen_span(
        full.data() + base.prompt_len,
        full.size() - static_cast<size_t>(base.prompt_len));
    ContextFeatures feats = featurizer.features(prompt_span, gen_span);
    profile.values.push_back(token_entropy(token_distribution(params, feats)));
    full.push_back(base.tokens[k]);
  }
  return profile;
}

SensitivePositions select_topk(const EntropyProfile& profile, int k) {
  if (profile.values.empty())
    throw std::invalid_argument("select_topk: empty profile");
  if (k < 0) throw std::invalid_argument("select_topk: negative k");

  const int n = static_cast<int>(profile.values.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return profile.values[static_cast<size_t>(a)] >
           profile.values[static_cast<size_t>(b)];
  });

  const int take = std::min(k, n);
  SensitivePositions out;
  out.positions.assign(order.begin(), order.begin() + take);
  for (int& p : out.positions) ++p;  // 1-based positions
  std::sort(out.positions.begin(), out.positions.end());
  return out;
}

std::vector<Block> segment_blocks(const Trajectory& base,
                                  const SensitivePositions& positions) {
  const int length = static_cast<int>(base.tokens.size());
  int prev = 0;
  for (int p : positions.positions) {
    if (p <= prev || p > length)
      throw std::invalid_argument(
          "segment_blocks: positions must be strictly increasing within 1..L");
    prev = p;
  }

  std::vector<int> cuts = positions.positions;
  cuts.push_back(length);  // k_{K+1} = L; final block may be empty

  std::vector<Block> blocks;
  blocks.reserve(cuts.size());
  int start = 0;
  for (size_t n = 0; n < cuts.size(); ++n) {
    Block block;
    block.index = static_cast<int>(n) + 1;
    block.tokens.assign(base.tokens.begin() + start,
                        base.tokens.begin() + cuts[n]);
    start = cuts[n];
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<IntermediateState> build_states(const TaskInstance& task,
                                            const std::vector<Block>& blocks) {
  std::vector<IntermediateState> states;
  states.reserve(blocks.size());

  IntermediateState state;
  state.j = 0;
  state.prefix.prompt = task.prompt;
  states.push_back(state);

  // The final block (index K+1) only closes the partition; it contributes no
  // additional rollout root.
  for (size_t n = 0; n + 1 < blocks.size(); ++n) {
    IntermediateState next = states.back();
    next.j = static_cast<int>(n) + 1;
    next.prefix.generated.insert(next.prefix.generated.end(),
                                 blocks[n].tokens.begin(),
                                 blocks[n].tokens.end());
    states.push_back(std::move(next));
  }
  return states;
}

}  // namespace fr3e
