#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "fr3e/first_return.hpp"
#include "fr3e/util.hpp"
#include "fr3e/policy.hpp"
#include "fr3e/rng.hpp"
#include "fr3e/token_mdp.hpp"

using namespace fr3e;

namespace {

PolicyParams random_params(int feature_dim, int vocab_size, uint64_t seed,
                           double scale = 0.5) {
  PolicyParams params = PolicyParams::zeros(feature_dim, vocab_size);
  Rng rng(seed);
  for (double& w : params.weights) w = scale * (2.0 * rng.uniform() - 1.0);
  return params;
}

Featurizer small_featurizer(int feature_dim = 64) {
  Featurizer f;
  f.vocab = Vocabulary::chain_sum();
  f.feature_dim = feature_dim;
  f.window = 4;
  return f;
}

ContextFeatures random_state_features(const Featurizer& featurizer, Rng& rng) {
  GenState state;
  int plen = 2 + rng.uniform_int(5);
  for (int i = 0; i < plen; ++i)
    state.prompt.push_back(rng.uniform_int(featurizer.vocab.size() - 1));
  state.prompt.push_back(11);
  int glen = rng.uniform_int(6);
  for (int i = 0; i < glen; ++i)
    state.generated.push_back(rng.uniform_int(featurizer.vocab.size() - 1));
  return featurize(featurizer, state);
}

/// Count how many times a feature row appears in the active set; hash
/// collisions make a row count once per occurrence.
int multiplicity(const ContextFeatures& feats, int32_t row) {
  int count = 0;
  for (int32_t f : feats.idx)
    if (f == row) ++count;
  return count;
}

}  // namespace

TEST_CASE("featurizer: deterministic, in-range, bias always active") {
  Featurizer f = small_featurizer(128);
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    GenState state;
    state.prompt = {1, 10, 2, 11};
    for (int i = 0; i < rng.uniform_int(8); ++i)
      state.generated.push_back(rng.uniform_int(16));
    ContextFeatures a = featurize(f, state);
    ContextFeatures b = featurize(f, state);
    CHECK(a.idx == b.idx);
    REQUIRE_FALSE(a.idx.empty());
    CHECK(a.idx[0] == 0);  // bias row
    for (int32_t idx : a.idx) {
      CHECK(idx >= 0);
      CHECK(idx < f.feature_dim);
    }
  }

  SUBCASE("features depend on the generated suffix") {
    GenState s1{{1, 10, 2, 11}, {3}};
    GenState s2{{1, 10, 2, 11}, {4}};
    CHECK(featurize(f, s1).idx != featurize(f, s2).idx);
  }
}

TEST_CASE("policy: zero weights give the exact uniform distribution") {
  Featurizer f = small_featurizer();
  PolicyParams params = PolicyParams::zeros(f.feature_dim, 16);
  GenState state{{1, 10, 2, 11}, {}};
  ContextFeatures feats = featurize(f, state);

  TokenDistribution dist = token_distribution(params, feats);
  REQUIRE(dist.probs.size() == 16);
  for (double p : dist.probs) CHECK(p == 0.0625);  // 1/16 is exact in binary

  CHECK(log_prob(params, feats, 0) == -std::log(16.0));
  CHECK(token_entropy(dist) ==
        doctest::Approx(2.7725887222397811).epsilon(1e-14));
}

TEST_CASE("policy: softmax sums to one and matches log probabilities") {
  Featurizer f = small_featurizer();
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    PolicyParams params = random_params(f.feature_dim, 16, 1000 + trial, 2.0);
    ContextFeatures feats = random_state_features(f, rng);

    Evaluation ev = evaluate(params, feats);
    double sum = 0.0;
    for (double p : ev.dist.probs) {
      CHECK(p > 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    for (int t = 0; t < 16; ++t)
      CHECK(std::exp(ev.log_prob(t)) ==
            doctest::Approx(ev.dist.probs[static_cast<size_t>(t)])
                .epsilon(1e-12));
  }
}

TEST_CASE("policy: a strongly boosted token dominates the distribution") {
  Featurizer f = small_featurizer();
  PolicyParams params = PolicyParams::zeros(f.feature_dim, 16);
  GenState state{{1, 10, 2, 11}, {}};
  ContextFeatures feats = featurize(f, state);

  // Push token 3 up through the bias row only.
  params.weights[static_cast<size_t>(0 * 16 + 3)] = 25.0;
  TokenDistribution dist = token_distribution(params, feats);
  CHECK(dist.probs[3] > 0.999999);
  CHECK(log_prob(params, feats, 3) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("policy: extreme scores stay finite") {
  Featurizer f = small_featurizer();
  PolicyParams params = PolicyParams::zeros(f.feature_dim, 16);
  for (int t = 0; t < 16; ++t)
    params.weights[static_cast<size_t>(t)] = t == 5 ? 700.0 : -700.0;
  GenState state{{1, 10, 2, 11}, {}};
  ContextFeatures feats = featurize(f, state);

  Evaluation ev = evaluate(params, feats);
  for (double p : ev.dist.probs) CHECK(std::isfinite(p));
  CHECK(std::isfinite(ev.log_prob(5)));
  CHECK(ev.dist.probs[5] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sampling: inverse-CDF walk matches a direct reimplementation") {
  Featurizer f = small_featurizer();
  PolicyParams params = random_params(f.feature_dim, 16, 7, 1.5);
  Rng state_rng(55);
  ContextFeatures feats = random_state_features(f, state_rng);
  TokenDistribution dist = token_distribution(params, feats);

  Rng a(123456);
  Rng b(123456);
  for (int i = 0; i < 10000; ++i) {
    int sampled = sample_token(dist, a);
    double u = b.uniform();
    int expected = 15;
    double cum = 0.0;
    for (int t = 0; t < 16; ++t) {
      cum += dist.probs[static_cast<size_t>(t)];
      if (u < cum) {
        expected = t;
        break;
      }
    }
    REQUIRE(sampled == expected);
  }
}

TEST_CASE("sampling: chi-square uniformity at zero weights") {
  Featurizer f = small_featurizer();
  PolicyParams params = PolicyParams::zeros(f.feature_dim, 16);
  GenState state{{1, 10, 2, 11}, {}};
  TokenDistribution dist = token_distribution(params, featurize(f, state));

  Rng rng(987654321u);
  std::vector<int> counts(16, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<size_t>(sample_token(dist, rng))];

  const double expected = n / 16.0;
  double chi2 = 0.0;
  for (int c : counts) {
    double d = c - expected;
    chi2 += d * d / expected;
  }
  // 15 degrees of freedom: mean 15, sd sqrt(30); 3 sigma is about 31.4.
  CHECK(chi2 < 31.4);
  CHECK(chi2 > 4.0);
}

TEST_CASE("gradient: analytic rows match central finite differences") {
  Featurizer f = small_featurizer(48);
  Rng rng(2024);
  const double h = 1e-5;
  int checked = 0;

  for (int trial = 0; trial < 25; ++trial) {
    PolicyParams params = random_params(f.feature_dim, 16, 300 + trial);
    ContextFeatures feats = random_state_features(f, rng);
    int token = rng.uniform_int(16);
    LogProbGrad grad = grad_log_prob(params, feats, token);

    // Probe every active row at two token columns, plus one inactive row.
    std::vector<int32_t> rows(feats.idx.begin(), feats.idx.end());
    for (int32_t row : rows) {
      for (int probe = 0; probe < 2; ++probe) {
        int col = probe == 0 ? token : rng.uniform_int(16);
        size_t flat = static_cast<size_t>(row) * 16 + static_cast<size_t>(col);

        PolicyParams plus = params;
        plus.weights[flat] += h;
        PolicyParams minus = params;
        minus.weights[flat] -= h;
        double numeric = (log_prob(plus, feats, token) -
                          log_prob(minus, feats, token)) /
                         (2.0 * h);
        double analytic = multiplicity(feats, row) *
                          grad.coeffs[static_cast<size_t>(col)];
        double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
        REQUIRE(std::fabs(numeric - analytic) / denom < 1e-6);
        ++checked;
      }
    }

    int32_t inactive = -1;
    for (int32_t cand = 0; cand < f.feature_dim; ++cand)
      if (multiplicity(feats, cand) == 0) {
        inactive = cand;
        break;
      }
    REQUIRE(inactive >= 0);
    PolicyParams plus = params;
    plus.weights[static_cast<size_t>(inactive) * 16] += h;
    CHECK(log_prob(plus, feats, token) == log_prob(params, feats, token));
  }
  CHECK(checked >= 100);
}

TEST_CASE("gradient: coefficients are one-minus-p at the token and minus-p elsewhere") {
  Featurizer f = small_featurizer();
  PolicyParams params = random_params(f.feature_dim, 16, 81);
  Rng rng(4);
  ContextFeatures feats = random_state_features(f, rng);
  Evaluation ev = evaluate(params, feats);
  LogProbGrad grad = grad_log_prob(params, feats, 6);

  REQUIRE(grad.coeffs.size() == 16);
  double sum = 0.0;
  for (int t = 0; t < 16; ++t) {
    double expected = (t == 6 ? 1.0 : 0.0) - ev.dist.probs[static_cast<size_t>(t)];
    CHECK(grad.coeffs[static_cast<size_t>(t)] == expected);
    sum += grad.coeffs[static_cast<size_t>(t)];
  }
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("updates: version bump, shape and finiteness checks") {
  PolicyParams params = PolicyParams::zeros(8, 16);
  WeightDelta zero;
  zero.values.assign(params.weights.size(), 0.0);

  PolicyParams next = apply_update(params, zero);
  CHECK(next.version == params.version + 1);
  CHECK(next.weights == params.weights);

  WeightDelta wrong;
  wrong.values.assign(params.weights.size() - 1, 0.0);
  CHECK_THROWS_AS(apply_update(params, wrong), std::invalid_argument);

  WeightDelta poisoned;
  poisoned.values.assign(params.weights.size(), 0.0);
  poisoned.values[3] = std::nan("");
  CHECK_THROWS_AS(apply_update(params, poisoned), std::invalid_argument);
}

TEST_CASE("checkpoints: bit-exact round-trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "fr3e_policy_test";
  fs::create_directories(dir);
  std::string path = (dir / "params.ckpt").string();

  PolicyParams params = random_params(96, 16, 31337, 3.0);
  params.version = 42;
  save_checkpoint(params, path);
  PolicyParams loaded = load_checkpoint(path);

  CHECK(loaded.feature_dim == params.feature_dim);
  CHECK(loaded.vocab_size == params.vocab_size);
  CHECK(loaded.version == params.version);
  REQUIRE(loaded.weights.size() == params.weights.size());
  CHECK(std::memcmp(loaded.weights.data(), params.weights.data(),
                    params.weights.size() * sizeof(double)) == 0);

  SUBCASE("loading garbage fails loudly") {
    std::string bad = (dir / "bad.ckpt").string();
    std::ofstream out(bad, std::ios::binary);
    out << "not a checkpoint";
    out.close();
    CHECK_THROWS(load_checkpoint(bad));
    CHECK_THROWS(load_checkpoint((dir / "missing.ckpt").string()));
  }

  fs::remove_all(dir);
}

TEST_CASE("generation: recorded log-probabilities replay exactly") {
  Featurizer f = small_featurizer(256);
  PolicyParams params = random_params(f.feature_dim, 16, 77, 1.0);
  std::vector<TaskInstance> tasks = generate_task_suite("chain-sum", 8, 21);

  for (const TaskInstance& task : tasks) {
    Rng rng(fnv1a(task.id));
    Trajectory traj = generate(params, f, task, 16, rng);
    REQUIRE(traj.terminated);
    REQUIRE(traj.tokens.size() == traj.logprobs.size());
    REQUIRE(traj.tokens.size() == traj.entropies.size());
    CHECK(traj.prompt_len == static_cast<int>(task.prompt.size()));
    CHECK(traj.context == task.prompt);

    // Replay every position under the same parameters: the recorded values
    // must be bit-identical because generation and optimization share one
    // evaluation code path.
    std::vector<int> prefix;
    for (size_t i = 0; i < traj.tokens.size(); ++i) {
      GenState state{task.prompt, prefix};
      ContextFeatures feats = featurize(f, state);
      CHECK(log_prob(params, feats, traj.tokens[i]) == traj.logprobs[i]);
      CHECK(token_entropy(token_distribution(params, feats)) ==
            traj.entropies[i]);
      prefix.push_back(traj.tokens[i]);
    }

    if (traj.ended_by_eos) {
      CHECK(traj.tokens.back() == f.vocab.eos);
    } else {
      CHECK(static_cast<int>(traj.tokens.size()) == 16);
    }
  }
}

TEST_CASE("generation: same seed reproduces the trajectory, greedy is deterministic") {
  Featurizer f = small_featurizer(256);
  PolicyParams params = random_params(f.feature_dim, 16, 11, 1.0);
  TaskInstance task = generate_task_suite("chain-sum-easy", 1, 5)[0];

  Rng r1(42), r2(42);
  Trajectory a = generate(params, f, task, 24, r1);
  Trajectory b = generate(params, f, task, 24, r2);
  CHECK(a.tokens == b.tokens);
  CHECK(a.logprobs == b.logprobs);

  Trajectory g1 = greedy_decode(params, f, task, 24);
  Trajectory g2 = greedy_decode(params, f, task, 24);
  CHECK(g1.tokens == g2.tokens);

  SUBCASE("greedy ties resolve to the lowest token id") {
    PolicyParams flat = PolicyParams::zeros(f.feature_dim, 16);
    Trajectory g = greedy_decode(flat, f, task, 6);
    for (int tok : g.tokens) CHECK(tok == 0);
    CHECK_FALSE(g.ended_by_eos);
  }
}

TEST_CASE("continuations: committed prefixes are honored and capped") {
  Featurizer f = small_featurizer(256);
  PolicyParams params = random_params(f.feature_dim, 16, 13, 1.0);
  TaskInstance task = generate_task_suite("chain-sum-easy", 1, 5)[0];

  std::vector<int> context = task.prompt;
  context.push_back(3);
  context.push_back(10);
  Rng rng(8);
  Trajectory traj = sample_continuation(params, f, task.id, context,
                                        static_cast<int>(task.prompt.size()),
                                        8, rng);
  CHECK(traj.context == context);
  CHECK(traj.prompt_len == static_cast<int>(task.prompt.size()));
  std::vector<int> full = traj.full_generated();
  REQUIRE(full.size() >= 2);
  CHECK(full[0] == 3);
  CHECK(full[1] == 10);
  // Continuation budget: 8 total generated minus the 2 committed tokens.
  CHECK(traj.tokens.size() <= 6);

  SUBCASE("prefix at the cap is rejected") {
    std::vector<int> saturated = task.prompt;
    for (int i = 0; i < 8; ++i) saturated.push_back(0);
    Rng r(1);
    CHECK_THROWS_AS(sample_continuation(params, f, task.id, saturated,
                                        static_cast<int>(task.prompt.size()),
                                        8, r),
                    std::invalid_argument);
  }

  SUBCASE("prefix already ended by eos is rejected") {
    std::vector<int> done = task.prompt;
    done.push_back(7);
    done.push_back(f.vocab.eos);
    Rng r(1);
    CHECK_THROWS_AS(sample_continuation(params, f, task.id, done,
                                        static_cast<int>(task.prompt.size()),
                                        8, r),
                    std::invalid_argument);
  }
}
