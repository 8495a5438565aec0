#include "fr3e/explore.hpp"

#include <stdexcept>

#include "fr3e/advantage.hpp"

namespace fr3e {

std::vector<Trajectory> rollout_from(const PolicyParams& params,
                                     const Featurizer& featurizer,
                                     const TaskInstance& task,
                                     const IntermediateState& state, int m,
                                     int max_len, Rng& rng) {
  if (m < 1) throw std::invalid_argument("rollout_from: m must be >= 1");
  const int prefix_len = static_cast<int>(state.prefix.generated.size());
  if (prefix_len >= max_len)
    throw std::invalid_argument(
        "rollout_from: state prefix already at the generation length cap");

  std::vector<int> context = state.prefix.prompt;
  context.insert(context.end(), state.prefix.generated.begin(),
                 state.prefix.generated.end());

  std::vector<Trajectory> rollouts;
  rollouts.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i)
    rollouts.push_back(sample_continuation(
        params, featurizer, task.id, context,
        static_cast<int>(state.prefix.prompt.size()), max_len, rng));
  return rollouts;
}

std::vector<int> score_group(const TaskInstance& task, const Vocabulary& vocab,
                             const std::vector<Trajectory>& rollouts) {
  std::vector<int> rewards;
  rewards.reserve(rollouts.size());
  for (const Trajectory& traj : rollouts)
    rewards.push_back(verify(task, traj, vocab));
  return rewards;
}

double empirical_value(const std::vector<int>& rewards) {
  if (rewards.empty())
    throw std::invalid_argument("empirical_value: empty reward group");
  double sum = 0.0;
  for (int r : rewards) {
    if (r != 0 && r != 1)
      throw std::invalid_argument("empirical_value: reward must be binary");
    sum += static_cast<double>(r);
  }
  return sum / static_cast<double>(rewards.size());
}

namespace {

/// Group for a state whose prefix already carries the terminating <eos>:
/// the only possible continuation is empty, so the group is m deterministic
/// copies of the prefix scored as complete trajectories.
RolloutGroup terminal_state_group(const TaskInstance& task,
                                  const Vocabulary& vocab,
                                  const IntermediateState& state, int m) {
  Trajectory traj;
  traj.task_id = task.id;
  traj.context = state.prefix.prompt;
  traj.context.insert(traj.context.end(), state.prefix.generated.begin(),
                      state.prefix.generated.end());
  traj.prompt_len = static_cast<int>(state.prefix.prompt.size());
  traj.terminated = true;
  traj.ended_by_eos = true;

  RolloutGroup group;
  group.state_index = state.j;
  int reward = verify(task, traj, vocab);
  traj.reward = reward;
  group.rollouts.assign(static_cast<size_t>(m), traj);
  group.rewards.assign(static_cast<size_t>(m), reward);
  group.value = static_cast<double>(reward);
  return group;
}

}  // namespace

ExplorationRecord explore_prompt(const TaskInstance& task,
                                 const Vocabulary& vocab,
                                 const PolicyParams& params,
                                 const Featurizer& featurizer,
                                 const Trajectory& base,
                                 const RolloutGroup& initial_group,
                                 const ExploreParams& explore, Rng& rng) {
  if (!base.terminated)
    throw std::invalid_argument("explore_prompt: base trajectory not terminated");
  if (initial_group.rewards.empty())
    throw std::invalid_argument("explore_prompt: empty initial group");

  ExplorationRecord record;
  record.task_id = task.id;
  record.base = base;
  record.profile = entropy_profile(params, featurizer, base);
  record.positions = select_topk(record.profile, explore.k_top);
  record.blocks = segment_blocks(base, record.positions);
  record.states = build_states(task, record.blocks);

  record.groups.push_back(initial_group);
  record.groups[0].state_index = 0;
  record.groups[0].value = empirical_value(initial_group.rewards);
  record.values.push_back(record.groups[0].value);
  record.alphas.push_back(1.0);

  for (size_t j = 1; j < record.states.size(); ++j) {
    const IntermediateState& state = record.states[j];
    RolloutGroup group;
    group.state_index = state.j;
    if (!state.prefix.generated.empty() &&
        state.prefix.generated.back() == vocab.eos) {
      group = terminal_state_group(task, vocab, state, explore.m_explore);
    } else {
      group.rollouts = rollout_from(params, featurizer, task, state,
                                    explore.m_explore, explore.max_len, rng);
      group.rewards = score_group(task, vocab, group.rollouts);
      for (size_t i = 0; i < group.rollouts.size(); ++i)
        group.rollouts[i].reward = group.rewards[i];
      group.value = empirical_value(group.rewards);
    }
    record.values.push_back(group.value);
    record.alphas.push_back(
        modulation_factor(record.values[j - 1], record.values[j]));
    record.groups.push_back(std::move(group));
  }
  return record;
}

}  // namespace fr3e
