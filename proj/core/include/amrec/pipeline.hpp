#pragma once

#include <string>
#include <vector>

#include "amrec/config.hpp"

namespace amrec {

/**
 * Command implementations behind the CLI verbs. Each takes a validated
 * RunConfig, writes its outputs under cfg.out_dir, and returns a process
 * exit code (0 on success; precondition problems throw ValidationError,
 * broken runtime invariants throw InvariantFailure, and the CLI maps those
 * to exit codes 2 and 3).
 */
int cmd_simulate(const RunConfig& cfg);
int cmd_reconstruct(const RunConfig& cfg);
int cmd_init_train(const RunConfig& cfg);
int cmd_stability(const RunConfig& cfg);

// Re-derives the runtime guarantees of finished runs from their trace.csv
// and metrics.json alone and writes a pass/fail report; returns 3 if any
// check fails.
int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& out_dir);

struct ReportCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunReport {
  std::string run_dir;
  std::vector<ReportCheck> checks;
  bool all_passed = false;
};

RunReport check_run_directory(const std::string& run_dir);

} // namespace amrec
