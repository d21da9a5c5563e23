#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "occaug/experiment/config.hpp"

namespace occaug {

/// Final-epoch accuracies of one group of repeated runs, mean and sample std.
struct GroupStats {
  std::vector<double> val_runs, val_occluded_runs;
  std::pair<double, double> val{0.0, 0.0};
  std::pair<double, double> val_occluded{0.0, 0.0};
};

struct GroupedResult {
  std::map<std::string, GroupStats> groups;
  bool all_ok = true;
};

/// Training setup shared by the desk-scale experiments: MiniSkip on the
/// two-cue dataset, 3 seeds per group.
ExperimentConfig desk_base_config(std::uint64_t seed);

/// Named groups compared by the occlusion thesis: "plain", "nonjoint"
/// (Hide-and-Seek, p_keep_image 0.5) and "joint" (Hide-and-Seek).
std::vector<std::pair<std::string, ExperimentConfig>> thesis_groups(std::uint64_t seed);

/// Batch augmentation M=2 with Cutout at p_keep_image 0.0 and 0.5.
std::vector<std::pair<std::string, ExperimentConfig>> always_occluded_groups(
    std::uint64_t seed);

inline constexpr int kDeskRepeats = 3;

/// Runs every group as a sweep of kDeskRepeats seeds under `dir/<group>`.
GroupedResult run_groups(const std::vector<std::pair<std::string, ExperimentConfig>>& groups,
                         const std::string& dir, int workers);

}  // namespace occaug
