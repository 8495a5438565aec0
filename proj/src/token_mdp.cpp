#include "fr3e/token_mdp.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fr3e/util.hpp"

namespace fr3e {

namespace {

constexpr int kPlus = 10;
constexpr int kEquals = 11;
constexpr int kFillerBase = 12;  // three filler symbols: 12, 13, 14
constexpr int kNumFillers = 3;

}  // namespace

Vocabulary Vocabulary::chain_sum() {
  Vocabulary v;
  v.symbols = {"0", "1", "2", "3", "4", "5", "6", "7",
               "8", "9", "+", "=", "a", "b", "c", "<eos>"};
  v.eos = 15;
  return v;
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
  }
  throw std::logic_error("unknown difficulty");
}

Difficulty difficulty_from_name(const std::string& name) {
  if (name == "easy") return Difficulty::easy;
  if (name == "medium") return Difficulty::medium;
  if (name == "hard") return Difficulty::hard;
  throw std::invalid_argument("unknown difficulty: " + name);
}

std::vector<int> Trajectory::full_generated() const {
  std::vector<int> out(context.begin() + prompt_len, context.end());
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

bool is_terminal(const GenState& state, const Vocabulary& vocab, int max_len) {
  if (!state.generated.empty() && state.generated.back() == vocab.eos)
    return true;
  return static_cast<int>(state.generated.size()) >= max_len;
}

GenState step(const GenState& state, int token, const Vocabulary& vocab,
              int max_len) {
  if (token < 0 || token >= vocab.size())
    throw std::invalid_argument("step: token id out of range");
  if (is_terminal(state, vocab, max_len))
    throw std::logic_error("step: state is already terminal");
  GenState next = state;
  next.generated.push_back(token);
  return next;
}

int verify(const TaskInstance& task, const Trajectory& traj,
           const Vocabulary& vocab) {
  if (!traj.terminated)
    throw std::invalid_argument("verify: trajectory is not terminated");
  if (traj.prompt_len > static_cast<int>(traj.context.size()) ||
      !std::equal(task.prompt.begin(), task.prompt.end(),
                  traj.context.begin(),
                  traj.context.begin() + traj.prompt_len))
    throw std::invalid_argument("verify: trajectory does not extend the task prompt");

  if (!traj.ended_by_eos) return 0;

  std::vector<int> seq = traj.full_generated();
  if (seq.empty() || seq.back() != vocab.eos)
    throw std::invalid_argument("verify: eos-terminated trajectory lacks <eos>");
  seq.pop_back();

  size_t run = 0;
  while (run < seq.size() && vocab.is_digit(seq[seq.size() - 1 - run])) ++run;
  if (run == 0) return 0;
  if (run > 12) return 0;  // longer than any representable task target

  long long value = 0;
  for (size_t i = seq.size() - run; i < seq.size(); ++i)
    value = value * 10 + vocab.digit_value(seq[i]);

  return value == task.target ? 1 : 0;
}

namespace {

TaskInstance make_chain_sum(Difficulty difficulty, Rng& rng) {
  int operands = 0;
  int max_value = 0;
  int distractors = 0;
  switch (difficulty) {
    case Difficulty::easy:
      operands = 2;
      max_value = 4;
      distractors = 0;
      break;
    case Difficulty::medium:
      operands = 3;
      max_value = 4;
      distractors = 1;
      break;
    case Difficulty::hard:
      operands = 4;
      max_value = 9;
      distractors = 2;
      break;
  }

  TaskInstance task;
  task.difficulty = difficulty;
  long long sum = 0;
  for (int i = 0; i < operands; ++i) {
    int value = rng.uniform_range(1, max_value);
    sum += value;
    if (i > 0) task.prompt.push_back(kPlus);
    task.prompt.push_back(value);
  }
  for (int i = 0; i < distractors; ++i) {
    int pos = rng.uniform_int(static_cast<int>(task.prompt.size()) + 1);
    int filler = kFillerBase + rng.uniform_int(kNumFillers);
    task.prompt.insert(task.prompt.begin() + pos, filler);
  }
  task.prompt.push_back(kEquals);
  task.target = sum;
  return task;
}

}  // namespace

std::vector<TaskInstance> generate_task_suite(const std::string& kind, int n,
                                              uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_task_suite: n must be >= 1");

  bool mixed = false;
  Difficulty fixed = Difficulty::easy;
  if (kind == "chain-sum") {
    mixed = true;
  } else if (kind == "chain-sum-easy") {
    fixed = Difficulty::easy;
  } else if (kind == "chain-sum-medium") {
    fixed = Difficulty::medium;
  } else if (kind == "chain-sum-hard") {
    fixed = Difficulty::hard;
  } else {
    throw std::invalid_argument("generate_task_suite: unknown kind: " + kind);
  }

  Rng rng(seed ^ fnv1a(kind));
  std::vector<TaskInstance> suite;
  suite.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Difficulty d = fixed;
    if (mixed) {
      double u = rng.uniform();
      d = u < 0.4 ? Difficulty::easy
                  : (u < 0.8 ? Difficulty::medium : Difficulty::hard);
    }
    TaskInstance task = make_chain_sum(d, rng);
    task.kind = kind;
    std::ostringstream id;
    id << kind << "-" << seed << "-" << i;
    task.id = id.str();
    suite.push_back(std::move(task));
  }
  return suite;
}

std::string task_to_line(const TaskInstance& task) {
  std::ostringstream out;
  out << task.id << '\t' << task.kind << '\t' << difficulty_name(task.difficulty)
      << '\t' << task.target << '\t';
  for (size_t i = 0; i < task.prompt.size(); ++i) {
    if (i > 0) out << ' ';
    out << task.prompt[i];
  }
  return out.str();
}

TaskInstance task_from_line(const std::string& line) {
  std::istringstream in(line);
  TaskInstance task;
  std::string difficulty;
  std::string prompt;
  if (!std::getline(in, task.id, '\t') || !std::getline(in, task.kind, '\t') ||
      !std::getline(in, difficulty, '\t'))
    throw std::runtime_error("task_from_line: malformed record: " + line);
  std::string target;
  if (!std::getline(in, target, '\t'))
    throw std::runtime_error("task_from_line: malformed record: " + line);
  task.target = std::stoll(target);
  task.difficulty = difficulty_from_name(difficulty);
  std::getline(in, prompt);
  std::istringstream tokens(prompt);
  int token = 0;
  while (tokens >> token) task.prompt.push_back(token);
  if (task.prompt.empty())
    throw std::runtime_error("task_from_line: empty prompt: " + line);
  return task;
}

void save_task_suite(const std::vector<TaskInstance>& suite,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_task_suite: cannot open " + path);
  for (const TaskInstance& task : suite) out << task_to_line(task) << '\n';
  if (!out) throw std::runtime_error("save_task_suite: write failed: " + path);
}

std::vector<TaskInstance> load_task_suite(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_task_suite: cannot open " + path);
  std::vector<TaskInstance> suite;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    suite.push_back(task_from_line(line));
  }
  return suite;
}

}  // namespace fr3e
