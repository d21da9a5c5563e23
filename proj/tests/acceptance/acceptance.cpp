// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Set OCCAUG_ACCEPTANCE_FAST=1 to skip the two training experiments.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "occaug/verify/criteria.hpp"

int main(int argc, char** argv) {
  occaug::VerifyOptions options;
  options.full = std::getenv("OCCAUG_ACCEPTANCE_FAST") == nullptr;
  options.work_dir = argc > 1 ? argv[1] : "acceptance_out";
  int failed = 0;
  occaug::run_criteria(options, [&](const occaug::CriterionResult& r) {
    std::printf("%s\n", occaug::format_result(r).c_str());
    std::fflush(stdout);
    if (!r.passed) ++failed;
  });
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
