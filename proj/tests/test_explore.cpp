#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fr3e/explore.hpp"
#include "fr3e/first_return.hpp"
#include "fr3e/policy.hpp"
#include "fr3e/rng.hpp"
#include "fr3e/token_mdp.hpp"

using namespace fr3e;

namespace {

struct Scenario {
  Vocabulary vocab = Vocabulary::chain_sum();
  Featurizer featurizer;
  PolicyParams params;
  TaskInstance task;

  explicit Scenario(uint64_t weight_seed, double scale = 0.6) {
    featurizer.vocab = vocab;
    featurizer.feature_dim = 512;
    featurizer.window = 4;
    params = PolicyParams::zeros(featurizer.feature_dim, vocab.size());
    Rng rng(weight_seed);
    for (double& w : params.weights) w = scale * (2.0 * rng.uniform() - 1.0);
    task = generate_task_suite("chain-sum-easy", 1, 9)[0];
  }
};

RolloutGroup initial_group_of(const Scenario& sc, int g, int max_len,
                              Rng& rng) {
  RolloutGroup group;
  group.state_index = 0;
  for (int i = 0; i < g; ++i)
    group.rollouts.push_back(
        generate(sc.params, sc.featurizer, sc.task, max_len, rng));
  group.rewards = score_group(sc.task, sc.vocab, group.rollouts);
  group.value = empirical_value(group.rewards);
  return group;
}

/// The exploration root must have finished with <eos>, exactly like the
/// reward-1 base the trainer selects, so every cut position has a live or
/// eos-terminated prefix.
const Trajectory& eos_base_of(const RolloutGroup& group) {
  for (const Trajectory& t : group.rollouts)
    if (t.ended_by_eos) return t;
  throw std::logic_error("test scenario produced no eos-terminated rollout");
}

}  // namespace

TEST_CASE("rollouts: every continuation starts at the unmodified prefix") {
  Scenario sc(100);
  IntermediateState state;
  state.j = 1;
  state.prefix.prompt = sc.task.prompt;
  state.prefix.generated = {3, 10};

  Rng rng(7);
  std::vector<Trajectory> rollouts =
      rollout_from(sc.params, sc.featurizer, sc.task, state, 6, 16, rng);
  REQUIRE(rollouts.size() == 6);

  std::vector<int> expected_context = sc.task.prompt;
  expected_context.push_back(3);
  expected_context.push_back(10);
  for (const Trajectory& r : rollouts) {
    CHECK(r.context == expected_context);
    CHECK(r.prompt_len == static_cast<int>(sc.task.prompt.size()));
    CHECK(r.terminated);
    // Continuation budget: the committed prefix counts against the cap.
    CHECK(static_cast<int>(r.tokens.size()) <= 16 - 2);
    std::vector<int> full = r.full_generated();
    REQUIRE(full.size() >= 2);
    CHECK(full[0] == 3);
    CHECK(full[1] == 10);
  }

  SUBCASE("a prefix at the cap cannot be continued") {
    IntermediateState stuck;
    stuck.j = 1;
    stuck.prefix.prompt = sc.task.prompt;
    stuck.prefix.generated.assign(16, 0);
    Rng r(1);
    CHECK_THROWS_AS(
        rollout_from(sc.params, sc.featurizer, sc.task, stuck, 2, 16, r),
        std::invalid_argument);
  }

  SUBCASE("m must be positive") {
    Rng r(1);
    CHECK_THROWS_AS(
        rollout_from(sc.params, sc.featurizer, sc.task, state, 0, 16, r),
        std::invalid_argument);
  }
}

TEST_CASE("group scoring: empirical value is the reward mean") {
  CHECK(empirical_value({1, 0, 0, 0}) == 0.25);
  CHECK(empirical_value({1, 1}) == 1.0);
  CHECK(empirical_value({0}) == 0.0);
  CHECK_THROWS_AS(empirical_value({}), std::invalid_argument);
  CHECK_THROWS_AS(empirical_value({2}), std::invalid_argument);
}

TEST_CASE("exploration: record structure is internally consistent") {
  Scenario sc(200);
  Rng rng(555);
  RolloutGroup initial = initial_group_of(sc, 8, 32, rng);
  Trajectory base = eos_base_of(initial);

  ExploreParams ep;
  ep.k_top = 4;
  ep.m_explore = 8;
  ep.max_len = 32;
  ExplorationRecord rec = explore_prompt(sc.task, sc.vocab, sc.params,
                                         sc.featurizer, base, initial, ep, rng);

  CHECK(rec.task_id == sc.task.id);
  REQUIRE(rec.profile.values.size() == base.tokens.size());
  const size_t k = rec.positions.positions.size();
  CHECK(k <= 4);
  REQUIRE(rec.blocks.size() == k + 1);
  REQUIRE(rec.states.size() == k + 1);
  REQUIRE(rec.groups.size() == rec.states.size());
  REQUIRE(rec.values.size() == rec.states.size());
  REQUIRE(rec.alphas.size() == rec.states.size());

  SUBCASE("group 0 is the initial full-rollout group") {
    CHECK(rec.groups[0].rollouts.size() == initial.rollouts.size());
    CHECK(rec.groups[0].rewards == initial.rewards);
    CHECK(rec.alphas[0] == 1.0);
    CHECK(rec.values[0] == empirical_value(initial.rewards));
  }

  SUBCASE("values are reward means and alphas follow the value ladder") {
    for (size_t j = 0; j < rec.groups.size(); ++j) {
      const RolloutGroup& g = rec.groups[j];
      CHECK(g.state_index == static_cast<int>(j));
      REQUIRE(g.rewards.size() == g.rollouts.size());
      for (int r : g.rewards) CHECK((r == 0 || r == 1));
      CHECK(g.value == empirical_value(g.rewards));
      // M * V must be a whole number of successes.
      double successes = g.value * static_cast<double>(g.rewards.size());
      CHECK(std::fabs(successes - std::round(successes)) < 1e-9);
      if (j > 0) {
        CHECK(rec.alphas[j] ==
              doctest::Approx(std::exp(rec.values[j - 1] - rec.values[j]))
                  .epsilon(1e-15));
        CHECK(rec.groups[j].rollouts.size() == 8);
      }
    }
  }

  SUBCASE("every rollout extends its state's prefix verbatim") {
    for (size_t j = 1; j < rec.groups.size(); ++j) {
      const IntermediateState& state = rec.states[j];
      std::vector<int> expected = state.prefix.prompt;
      expected.insert(expected.end(), state.prefix.generated.begin(),
                      state.prefix.generated.end());
      for (const Trajectory& r : rec.groups[j].rollouts) {
        CHECK(r.context == expected);
        CHECK(r.prompt_len == static_cast<int>(sc.task.prompt.size()));
        CHECK(r.reward.has_value());
      }
    }
  }

  SUBCASE("state prefixes chain through the blocks") {
    CHECK(rec.states[0].prefix.generated.empty());
    for (size_t j = 1; j < rec.states.size(); ++j) {
      std::vector<int> expected = rec.states[j - 1].prefix.generated;
      expected.insert(expected.end(), rec.blocks[j - 1].tokens.begin(),
                      rec.blocks[j - 1].tokens.end());
      CHECK(rec.states[j].prefix.generated == expected);
    }
  }

  SUBCASE("the base trajectory is stored untouched") {
    CHECK(rec.base.tokens == base.tokens);
    CHECK(rec.base.logprobs == base.logprobs);
    CHECK(rec.base.context == base.context);
  }
}

TEST_CASE("exploration: identical seeds reproduce the record") {
  Scenario sc(300);
  Rng setup(99);
  RolloutGroup initial = initial_group_of(sc, 6, 24, setup);
  Trajectory base = eos_base_of(initial);
  ExploreParams ep;
  ep.k_top = 3;
  ep.m_explore = 5;
  ep.max_len = 24;

  Rng r1(4242), r2(4242);
  ExplorationRecord a = explore_prompt(sc.task, sc.vocab, sc.params,
                                       sc.featurizer, base, initial, ep, r1);
  ExplorationRecord b = explore_prompt(sc.task, sc.vocab, sc.params,
                                       sc.featurizer, base, initial, ep, r2);

  CHECK(a.positions.positions == b.positions.positions);
  CHECK(a.values == b.values);
  CHECK(a.alphas == b.alphas);
  REQUIRE(a.groups.size() == b.groups.size());
  for (size_t j = 0; j < a.groups.size(); ++j) {
    REQUIRE(a.groups[j].rollouts.size() == b.groups[j].rollouts.size());
    for (size_t i = 0; i < a.groups[j].rollouts.size(); ++i) {
      CHECK(a.groups[j].rollouts[i].tokens == b.groups[j].rollouts[i].tokens);
      CHECK(a.groups[j].rollouts[i].logprobs ==
            b.groups[j].rollouts[i].logprobs);
    }
  }
}

TEST_CASE("exploration: k_top zero degenerates to the initial group alone") {
  Scenario sc(400);
  Rng rng(21);
  RolloutGroup initial = initial_group_of(sc, 4, 16, rng);
  ExploreParams ep;
  ep.k_top = 0;
  ep.m_explore = 4;
  ep.max_len = 16;

  ExplorationRecord rec =
      explore_prompt(sc.task, sc.vocab, sc.params, sc.featurizer,
                     initial.rollouts[0], initial, ep, rng);
  CHECK(rec.positions.positions.empty());
  CHECK(rec.blocks.size() == 1);
  CHECK(rec.states.size() == 1);
  CHECK(rec.groups.size() == 1);
  CHECK(rec.alphas == std::vector<double>{1.0});
}

TEST_CASE("exploration: a sensitive position at the final <eos> yields a deterministic group") {
  Scenario sc(500);

  // Force the policy to end the base trajectory immediately: a huge bias
  // towards <eos> makes every entropy peak sit at position 1, the <eos>
  // itself, so S_1's prefix is already terminated.
  PolicyParams eos_params = PolicyParams::zeros(sc.featurizer.feature_dim, 16);
  for (size_t f = 0; f < static_cast<size_t>(sc.featurizer.feature_dim); ++f)
    eos_params.weights[f * 16 + 15] = 3.0;

  Rng rng(77);
  RolloutGroup initial;
  initial.state_index = 0;
  for (int i = 0; i < 4; ++i)
    initial.rollouts.push_back(
        generate(eos_params, sc.featurizer, sc.task, 16, rng));
  initial.rewards = score_group(sc.task, sc.vocab, initial.rollouts);
  initial.value = empirical_value(initial.rewards);

  Trajectory base;
  for (const Trajectory& t : initial.rollouts)
    if (t.ended_by_eos && t.tokens.size() == 1) base = t;
  REQUIRE(base.terminated);  // bare-<eos> answers are near-certain here

  ExploreParams ep;
  ep.k_top = 2;
  ep.m_explore = 5;
  ep.max_len = 16;
  ExplorationRecord rec = explore_prompt(sc.task, sc.vocab, eos_params,
                                         sc.featurizer, base, initial, ep, rng);

  // One generated token means one position, so K collapses to 1 and the
  // final state's prefix carries the terminating <eos>.
  REQUIRE(rec.states.size() == 2);
  CHECK(rec.states[1].prefix.generated == std::vector<int>{15});
  const RolloutGroup& g = rec.groups[1];
  REQUIRE(g.rollouts.size() == 5);
  for (const Trajectory& t : g.rollouts) {
    CHECK(t.tokens.empty());
    CHECK(t.ended_by_eos);
    CHECK(t.reward == 0);  // "<eos>" alone carries no answer digits
  }
  CHECK(g.value == 0.0);
}

TEST_CASE("exploration: contract violations") {
  Scenario sc(600);
  Rng rng(3);
  RolloutGroup initial = initial_group_of(sc, 4, 16, rng);
  ExploreParams ep;

  SUBCASE("unterminated base") {
    Trajectory base = initial.rollouts[0];
    base.terminated = false;
    CHECK_THROWS_AS(explore_prompt(sc.task, sc.vocab, sc.params, sc.featurizer,
                                   base, initial, ep, rng),
                    std::invalid_argument);
  }

  SUBCASE("empty initial group") {
    RolloutGroup empty;
    CHECK_THROWS_AS(explore_prompt(sc.task, sc.vocab, sc.params, sc.featurizer,
                                   initial.rollouts[0], empty, ep, rng),
                    std::invalid_argument);
  }
}
