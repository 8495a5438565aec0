#include "fr3e/run_log.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fr3e {

namespace {

using nlohmann::json;

json trajectory_to_json(const Trajectory& traj) {
  json j;
  j["task_id"] = traj.task_id;
  j["context"] = traj.context;
  j["prompt_len"] = traj.prompt_len;
  j["tokens"] = traj.tokens;
  j["logprobs"] = traj.logprobs;
  j["entropies"] = traj.entropies;
  j["terminated"] = traj.terminated;
  j["ended_by_eos"] = traj.ended_by_eos;
  if (traj.reward)
    j["reward"] = *traj.reward;
  else
    j["reward"] = nullptr;
  return j;
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory traj;
  traj.task_id = j.at("task_id").get<std::string>();
  traj.context = j.at("context").get<std::vector<int>>();
  traj.prompt_len = j.at("prompt_len").get<int>();
  traj.tokens = j.at("tokens").get<std::vector<int>>();
  traj.logprobs = j.at("logprobs").get<std::vector<double>>();
  traj.entropies = j.at("entropies").get<std::vector<double>>();
  traj.terminated = j.at("terminated").get<bool>();
  traj.ended_by_eos = j.at("ended_by_eos").get<bool>();
  if (!j.at("reward").is_null()) traj.reward = j.at("reward").get<int>();
  return traj;
}

json record_to_json(const ExplorationRecord& record) {
  json j;
  j["type"] = "exploration_record";
  j["task_id"] = record.task_id;
  j["base"] = trajectory_to_json(record.base);
  j["profile"] = record.profile.values;
  j["positions"] = record.positions.positions;

  json blocks = json::array();
  for (const Block& block : record.blocks) blocks.push_back(block.tokens);
  j["blocks"] = blocks;

  json groups = json::array();
  for (const RolloutGroup& group : record.groups) {
    json g;
    g["state_index"] = group.state_index;
    g["rewards"] = group.rewards;
    g["value"] = group.value;
    json rollouts = json::array();
    for (const Trajectory& traj : group.rollouts)
      rollouts.push_back(trajectory_to_json(traj));
    g["rollouts"] = rollouts;
    groups.push_back(std::move(g));
  }
  j["groups"] = groups;

  j["values"] = record.values;
  j["alphas"] = record.alphas;
  return j;
}

ExplorationRecord record_from_json(const json& j) {
  ExplorationRecord record;
  record.task_id = j.at("task_id").get<std::string>();
  record.base = trajectory_from_json(j.at("base"));
  record.profile.values = j.at("profile").get<std::vector<double>>();
  record.positions.positions = j.at("positions").get<std::vector<int>>();

  int index = 0;
  for (const json& tokens : j.at("blocks")) {
    Block block;
    block.index = ++index;
    block.tokens = tokens.get<std::vector<int>>();
    record.blocks.push_back(std::move(block));
  }

  for (const json& g : j.at("groups")) {
    RolloutGroup group;
    group.state_index = g.at("state_index").get<int>();
    group.rewards = g.at("rewards").get<std::vector<int>>();
    group.value = g.at("value").get<double>();
    for (const json& traj : g.at("rollouts"))
      group.rollouts.push_back(trajectory_from_json(traj));
    record.groups.push_back(std::move(group));
  }

  record.values = j.at("values").get<std::vector<double>>();
  record.alphas = j.at("alphas").get<std::vector<double>>();

  // States are fully determined by the prompt and the blocks; rebuild them so
  // a replayed record is structurally identical to the live one.
  IntermediateState state;
  state.j = 0;
  state.prefix.prompt.assign(
      record.base.context.begin(),
      record.base.context.begin() + record.base.prompt_len);
  record.states.push_back(state);
  for (size_t n = 0; n + 1 < record.blocks.size(); ++n) {
    IntermediateState next = record.states.back();
    next.j = static_cast<int>(n) + 1;
    next.prefix.generated.insert(next.prefix.generated.end(),
                                 record.blocks[n].tokens.begin(),
                                 record.blocks[n].tokens.end());
    record.states.push_back(std::move(next));
  }
  return record;
}

json step_to_json(const StepStats& stats) {
  json j;
  j["type"] = "step_stats";
  j["step"] = stats.step;
  j["loss"] = stats.loss;
  j["mean_token_entropy"] = stats.mean_token_entropy;
  j["adv_mean"] = stats.adv_mean;
  j["adv_std"] = stats.adv_std;
  j["clip_fraction"] = stats.clip_fraction;
  j["mean_ratio"] = stats.mean_ratio;
  j["mean_response_length"] = stats.mean_response_length;
  j["all_right_count"] = stats.all_right_count;
  j["all_wrong_count"] = stats.all_wrong_count;
  j["solve_rate"] = stats.solve_rate;
  return j;
}

StepStats step_from_json(const json& j) {
  StepStats stats;
  stats.step = j.at("step").get<int64_t>();
  stats.loss = j.at("loss").get<double>();
  stats.mean_token_entropy = j.at("mean_token_entropy").get<double>();
  stats.adv_mean = j.at("adv_mean").get<double>();
  stats.adv_std = j.at("adv_std").get<double>();
  stats.clip_fraction = j.at("clip_fraction").get<double>();
  stats.mean_ratio = j.at("mean_ratio").get<double>();
  stats.mean_response_length = j.at("mean_response_length").get<double>();
  stats.all_right_count = j.at("all_right_count").get<int64_t>();
  stats.all_wrong_count = j.at("all_wrong_count").get<int64_t>();
  stats.solve_rate = j.at("solve_rate").get<double>();
  return stats;
}

}  // namespace

RunLogWriter::RunLogWriter(const std::string& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("RunLogWriter: cannot open " + path_);
}

void RunLogWriter::append_line(const std::string& line) {
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("RunLogWriter: write failed: " + path_);
}

void RunLogWriter::write_step(const StepStats& stats) {
  append_line(step_to_json(stats).dump());
}

void RunLogWriter::write_record(const ExplorationRecord& record) {
  append_line(record_to_json(record).dump());
}

RunLogStats read_run_log(const std::string& path,
                         const StepStatsHandler& on_step,
                         const RecordHandler& on_record,
                         const LogErrorHandler& on_error) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_run_log: cannot open " + path);

  RunLogStats stats;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      std::string type = j.at("type").get<std::string>();
      if (type == "step_stats") {
        StepStats step = step_from_json(j);
        ++stats.step_lines;
        if (on_step) on_step(step);
      } else if (type == "exploration_record") {
        ExplorationRecord record = record_from_json(j);
        ++stats.record_lines;
        if (on_record) on_record(record);
      } else {
        throw std::runtime_error("unknown record type: " + type);
      }
    } catch (const std::exception& e) {
      ++stats.corrupt_lines;
      if (on_error) on_error(line_no, e.what());
    }
  }
  return stats;
}

}  // namespace fr3e
