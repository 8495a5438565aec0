#pragma once

#include <fstream>
#include <functional>
#include <string>

#include "fr3e/explore.hpp"
#include "fr3e/telemetry.hpp"

namespace fr3e {

// ============================================================================
// Run log: one JSON object per line, interleaving per-step statistics with
// full exploration records.  The reader replays a log for offline analysis
// and tolerates corrupt lines (they are reported and skipped, so a truncated
// log from an aborted run stays usable).
// ============================================================================

class RunLogWriter {
 public:
  explicit RunLogWriter(const std::string& path);

  void write_step(const StepStats& stats);
  void write_record(const ExplorationRecord& record);

 private:
  std::string path_;
  std::ofstream out_;
  void append_line(const std::string& line);
};

struct RunLogStats {
  int step_lines = 0;
  int record_lines = 0;
  int corrupt_lines = 0;
};

using StepStatsHandler = std::function<void(const StepStats&)>;
using RecordHandler = std::function<void(const ExplorationRecord&)>;
using LogErrorHandler = std::function<void(int line_no, const std::string&)>;

/**
 * Replays a run log.  Handlers may be empty; corrupt lines invoke the error
 * handler and reading continues.  Throws std::runtime_error when the file
 * cannot be opened.
 */
RunLogStats read_run_log(const std::string& path,
                         const StepStatsHandler& on_step,
                         const RecordHandler& on_record,
                         const LogErrorHandler& on_error);

}  // namespace fr3e
