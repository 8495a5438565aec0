#pragma once

#include <string>

namespace fr3e {

// ============================================================================
// Command-line front end.  Exit codes: 0 success, 1 runtime failure,
// 2 usage or config error.  All hyperparameters live in the config file;
// flags only select files and subcommands.
// ============================================================================

int cmd_gen_tasks(const std::string& kind, int n, uint64_t seed,
                  const std::string& out_path);

int cmd_train(const std::string& config_path, const std::string& suite_path,
              const std::string& eval_suite_path, const std::string& out_dir);

int cmd_analyze(const std::string& log_path);

int cmd_compare(const std::string& run_a, const std::string& run_b,
                const std::string& out_path);

/// Parses argv and dispatches to the subcommands.
int run_cli(int argc, const char* const* argv);

}  // namespace fr3e
