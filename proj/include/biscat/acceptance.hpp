#pragma once

#include <string>
#include <vector>

namespace biscat {

/// Outcome of one desk-scale acceptance criterion on the standard scene.
/// Tolerances are pinned inside the runner; detail carries the measured
/// numbers so a failure is diagnosable from the log alone.
struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs the acceptance criteria (1..11); empty ids means all of them.
/// Criteria never throw out of the runner: an exception inside a
/// criterion records a failure with the message in detail.
std::vector<CriterionResult> run_acceptance(const std::vector<int>& ids = {});

CriterionResult run_criterion(int id);

}  // namespace biscat
