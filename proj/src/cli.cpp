#include "fr3e/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fr3e/run_log.hpp"
#include "fr3e/telemetry.hpp"
#include "fr3e/trainer.hpp"
#include "fr3e/util.hpp"

namespace fr3e {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int cmd_gen_tasks(const std::string& kind, int n, uint64_t seed,
                  const std::string& out_path) {
  std::vector<TaskInstance> suite;
  try {
    suite = generate_task_suite(kind, n, seed);
  } catch (const std::exception& e) {
    std::cerr << "gen-tasks: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    save_task_suite(suite, out_path);
  } catch (const std::exception& e) {
    std::cerr << "gen-tasks: " << e.what() << '\n';
    return kExitRuntime;
  }

  std::map<std::string, int> by_difficulty;
  for (const TaskInstance& task : suite)
    ++by_difficulty[difficulty_name(task.difficulty)];
  std::cout << "wrote " << suite.size() << " tasks to " << out_path << '\n';
  for (const auto& [name, count] : by_difficulty)
    std::cout << "  " << name << ": " << count << '\n';
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& suite_path,
              const std::string& eval_suite_path, const std::string& out_dir) {
  TrainConfig config;
  std::vector<TaskInstance> train_suite;
  std::vector<TaskInstance> eval_suite;
  try {
    config = parse_config_file(config_path);
    train_suite = load_task_suite(suite_path);
    if (train_suite.empty())
      throw std::runtime_error("training suite is empty: " + suite_path);
    if (!eval_suite_path.empty()) {
      eval_suite = load_task_suite(eval_suite_path);
    } else {
      // No held-out suite given: derive one deterministically from the same
      // generator family, offset from the training seed.
      eval_suite = generate_task_suite(train_suite.front().kind, 64,
                                       config.seed + 0x9e3779b9ull);
    }
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << '\n';
    return kExitUsage;
  }

  const Vocabulary vocab = Vocabulary::chain_sum();
  MetricsHistory partial;
  partial.meta.algorithm = config.algorithm;
  partial.meta.seed = config.seed;
  partial.meta.config_hash = config_hash(config);
  partial.meta.suite_hash = suite_hash(train_suite);

  try {
    fs::create_directories(fs::path(out_dir));
    {
      std::ofstream snapshot(fs::path(out_dir) / "config.txt",
                             std::ios::binary);
      if (!snapshot)
        throw std::runtime_error("cannot write config snapshot in " + out_dir);
      snapshot << config_to_text(config);
    }

    RunLogWriter log((fs::path(out_dir) / "run_log.jsonl").string());
    StepObserver observer = [&](const StepStats& stats,
                                const std::vector<ExplorationRecord>& records) {
      log.write_step(stats);
      for (const ExplorationRecord& record : records) log.write_record(record);
      partial.steps.push_back(stats);
    };

    MetricsHistory history = run_training(
        config, vocab, train_suite, eval_suite, observer,
        (fs::path(out_dir) / "checkpoints").string());

    if (!history.steps.empty()) export_metrics(history, out_dir);
    std::cout << "trained " << history.steps.size() << " steps";
    if (history.steps.size() < static_cast<size_t>(config.max_steps))
      std::cout << " (stopped early: attempts budget exhausted)";
    std::cout << '\n';
    if (!history.steps.empty())
      std::cout << "final solve rate: " << history.steps.back().solve_rate
                << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "train: " << e.what() << '\n';
    if (!partial.steps.empty()) {
      try {
        export_metrics(partial, out_dir);
        std::cerr << "train: exported " << partial.steps.size()
                  << " completed steps before the failure\n";
      } catch (const std::exception& inner) {
        std::cerr << "train: partial export failed: " << inner.what() << '\n';
      }
    }
    return kExitRuntime;
  }
}

int cmd_analyze(const std::string& log_path) {
  if (!fs::exists(log_path)) {
    std::cerr << "analyze: no such log: " << log_path << '\n';
    return kExitUsage;
  }

  int64_t all_right = 0;
  int64_t all_wrong = 0;
  int record_count = 0;
  int position_total = 0;
  int alpha_drift_count = 0;
  double max_alpha_drift = 0.0;
  StepStats last_step{};
  bool saw_step = false;

  StepStatsHandler on_step = [&](const StepStats& stats) {
    last_step = stats;
    saw_step = true;
  };

  RecordHandler on_record = [&](const ExplorationRecord& record) {
    ++record_count;
    position_total += static_cast<int>(record.positions.positions.size());
    auto [right, wrong] = count_group_extremes(record.groups);
    all_right += right;
    all_wrong += wrong;

    std::cout << record.task_id << ": K="
              << record.positions.positions.size() << " positions=[";
    for (size_t i = 0; i < record.positions.positions.size(); ++i)
      std::cout << (i > 0 ? " " : "") << record.positions.positions[i];
    std::cout << "] values=[";
    for (size_t i = 0; i < record.values.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", record.values[i]);
      std::cout << (i > 0 ? " " : "") << buf;
    }
    std::cout << "] alphas=[";
    for (size_t i = 0; i < record.alphas.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", record.alphas[i]);
      std::cout << (i > 0 ? " " : "") << buf;
      if (i > 0) {
        double expected = std::exp(record.values[i - 1] - record.values[i]);
        double drift = std::abs(record.alphas[i] - expected);
        max_alpha_drift = std::max(max_alpha_drift, drift);
        if (drift > 1e-12) ++alpha_drift_count;
      }
    }
    std::cout << "]\n";
  };

  LogErrorHandler on_error = [](int line_no, const std::string& what) {
    std::cerr << "analyze: line " << line_no << ": corrupt record skipped ("
              << what << ")\n";
  };

  RunLogStats stats;
  try {
    stats = read_run_log(log_path, on_step, on_record, on_error);
  } catch (const std::exception& e) {
    std::cerr << "analyze: " << e.what() << '\n';
    return kExitUsage;
  }

  std::cout << "steps: " << stats.step_lines
            << "  records: " << stats.record_lines
            << "  corrupt lines: " << stats.corrupt_lines << '\n';
  if (record_count > 0) {
    std::cout << "all-right groups: " << all_right
              << "  all-wrong groups: " << all_wrong << '\n';
    std::cout << "mean sensitive positions per record: "
              << static_cast<double>(position_total) / record_count << '\n';
    std::cout << "max modulation-factor drift vs recomputation: "
              << max_alpha_drift;
    if (alpha_drift_count > 0)
      std::cout << "  (" << alpha_drift_count << " values above 1e-12)";
    std::cout << '\n';
  }
  if (saw_step)
    std::cout << "last step: " << last_step.step
              << "  solve_rate: " << last_step.solve_rate << '\n';
  return kExitOk;
}

int cmd_compare(const std::string& run_a, const std::string& run_b,
                const std::string& out_path) {
  MetricsHistory a;
  MetricsHistory b;
  try {
    a = load_metrics(run_a);
    b = load_metrics(run_b);
  } catch (const std::exception& e) {
    std::cerr << "compare: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    Comparison comparison = compare(a, b);
    if (!out_path.empty()) write_comparison(comparison, out_path);
    std::cout << comparison_summary_text(comparison);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "compare: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Desk-scale entropy-guided exploration lab"};
  app.require_subcommand(1);

  std::string kind = "chain-sum";
  int n = 100;
  uint64_t seed = 1;
  std::string out_path;
  CLI::App* gen = app.add_subcommand("gen-tasks", "Generate a task suite");
  gen->add_option("--kind", kind, "Task family")->capture_default_str();
  gen->add_option("--n", n, "Number of tasks")->capture_default_str();
  gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", out_path, "Output suite file")->required();

  std::string config_path;
  std::string suite_path;
  std::string eval_suite_path;
  std::string run_dir;
  CLI::App* train = app.add_subcommand("train", "Run a training job");
  train->add_option("--config", config_path, "Config file")->required();
  train->add_option("--suite", suite_path, "Training suite file")->required();
  train->add_option("--eval-suite", eval_suite_path,
                    "Held-out evaluation suite file");
  train->add_option("--out", run_dir, "Run output directory")->required();

  std::string log_path;
  CLI::App* analyze = app.add_subcommand("analyze", "Inspect a run log");
  analyze->add_option("--log", log_path, "run_log.jsonl path")->required();

  std::string dir_a;
  std::string dir_b;
  std::string compare_out;
  CLI::App* comp = app.add_subcommand("compare", "Compare two run directories");
  comp->add_option("--run-a", dir_a, "First run directory")->required();
  comp->add_option("--run-b", dir_b, "Second run directory")->required();
  comp->add_option("--out", compare_out, "Comparison table output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (gen->parsed()) return cmd_gen_tasks(kind, n, seed, out_path);
  if (train->parsed())
    return cmd_train(config_path, suite_path, eval_suite_path, run_dir);
  if (analyze->parsed()) return cmd_analyze(log_path);
  if (comp->parsed()) return cmd_compare(dir_a, dir_b, compare_out);
  return kExitUsage;
}

}  // namespace fr3e
