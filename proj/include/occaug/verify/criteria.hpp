#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace occaug {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  /// Include the training experiments (criteria 8 and 9).
  bool full = false;
  std::uint64_t seed = 2024;
  /// Scratch directory for experiment outputs.
  std::string work_dir = "verify_out";
  int workers = 1;
};

/// Runs the acceptance checks in order, reporting each as it completes.
std::vector<CriterionResult> run_criteria(
    const VerifyOptions& options,
    const std::function<void(const CriterionResult&)>& on_result = {});

/// Human-readable one-line form: "[PASS] 3 mask statistics: ...".
std::string format_result(const CriterionResult& r);

}  // namespace occaug
