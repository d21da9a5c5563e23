#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "occaug/data/two_cue.hpp"
#include "occaug/nn/arch.hpp"
#include "occaug/occlusion/mask.hpp"
#include "occaug/pipeline/pipeline.hpp"
#include "occaug/saliency/saliency.hpp"
#include "occaug/train/optim.hpp"

namespace occaug {

enum class DataSource { two_cue, files };

/// Everything one training run needs. Text form is one "key = value" per
/// line with dotted section names; see config_keys() for the full list.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string output_dir = "out";

  ArchName arch = ArchName::mini_skip;
  std::size_t width = 16;
  RegularizerSpec regularizer;  // empty placement selects the default

  DataSource data_source = DataSource::two_cue;
  std::string train_path, val_path, val_occluded_path;
  std::uint64_t data_seed = 1;
  TwoCueSpec two_cue;

  int crop = 32;
  double flip_prob = 0.5;

  BatchPlan plan;
  HideSeekParams hide_seek;
  CutoutParams cutout;
  SaliencyOccluderParams saliency;

  Schedule schedule;
  SgdOptions sgd;
  std::size_t batch_size = 128;
  double label_smoothing = 0.0;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Keys in serialisation order.
std::vector<std::string> config_keys();

/// Applies "key = value" entries on top of `base`. Unknown keys, duplicate
/// keys and unparsable values are collected and reported together in a
/// ConfigError. A missing plan.copies defaults to 2 for joint strategies.
ExperimentConfig apply_config_entries(
    const std::vector<std::pair<std::string, std::string>>& entries,
    ExperimentConfig base = {});

/// Splits text into (key, value) pairs. '#' starts a comment; blank lines
/// are skipped. Malformed lines raise ConfigError listing every one.
std::vector<std::pair<std::string, std::string>> parse_entries(std::string_view text);

/// Parses and validates.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);
std::string config_value(const ExperimentConfig& config, const std::string& key);

/// Every semantic violation, empty for a usable config.
std::vector<std::string> validate_config(const ExperimentConfig& config);

/// Grid of base config values. Axis keys are config keys; each axis lists
/// the values to grid over. Run i of cell c, repeat r is i = c * repeats + r
/// and uses seed base.seed + i.
struct SweepSpec {
  ExperimentConfig base;
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  int repeats = 1;
  int workers = 1;
};

/// Sweep file: a config plus "sweep.axis.<key> = v1, v2, ...",
/// "sweep.repeats" and "sweep.workers" entries.
SweepSpec parse_sweep(std::string_view text);
SweepSpec load_sweep(const std::string& path);

std::string read_text_file(const std::string& path);

}  // namespace occaug
