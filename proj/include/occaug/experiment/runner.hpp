#pragma once

#include <optional>
#include <string>
#include <vector>

#include "occaug/data/dataset.hpp"
#include "occaug/experiment/config.hpp"
#include "occaug/train/trainer.hpp"

namespace occaug {

struct ExperimentData {
  LabeledDataset train;
  LabeledDataset val;
  std::optional<LabeledDataset> val_occluded;
};

/// Generates or loads the splits named by the config.
ExperimentData load_experiment_data(const ExperimentConfig& config);

/// Writes train.lds, val.lds, val_occluded.lds and manifest.txt.
void generate_data(const TwoCueSpec& spec, std::uint64_t seed,
                   const std::string& out_dir);

struct RunOptions {
  /// Resume from this training checkpoint instead of starting fresh.
  std::string resume_from;
  /// Stop once this many epochs are complete (the checkpoint still records
  /// the point reached). Negative runs the full schedule.
  int stop_after = -1;
  /// Reuses already loaded data, e.g. across the runs of a sweep.
  const ExperimentData* data = nullptr;
};

struct RunResult {
  TrainLog log;
  bool ok = false;
  std::string status;  // "ok", "stopped" or the failure message
};

/// Trains per the config and writes, under config.output_dir: config.txt,
/// trainlog.csv, timing.csv, checkpoint.ocsm and summary.csv. Evaluates val
/// (and val_occluded when present) after every epoch. A non-finite loss
/// ends the run with a diagnostic trainlog row, status "nan_loss: ..." and
/// a NumericError.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

std::string summary_header();
std::string summary_row(const ExperimentConfig& config, const RunResult& result);

struct SweepCell {
  std::vector<std::string> values;  // one per axis
  std::vector<RunResult> runs;
  std::vector<std::uint64_t> seeds;
};

struct SweepResult {
  std::vector<std::string> axes;
  std::vector<SweepCell> cells;
};

/// Runs every grid cell `repeats` times, `workers` runs at a time. Run i
/// writes to <base output_dir>/run_<i>. Failed runs are recorded and the
/// sweep continues. Writes table.csv (one row per cell: mean and sample
/// standard deviation of the final metrics over successful runs) and
/// curves.csv (per axis value, the same statistics pooled over the other
/// axes).
SweepResult run_sweep(const SweepSpec& sweep);

/// Configuration of every run of a sweep, in run-index order.
std::vector<ExperimentConfig> sweep_run_configs(const SweepSpec& sweep);

std::string sweep_table_csv(const SweepResult& result);
std::string sweep_curves_csv(const SweepResult& result);

/// Mean and sample standard deviation (n - 1 denominator; 0 for one value).
std::pair<double, double> mean_std(const std::vector<double>& values);

/// For the first n samples of `ds`, writes the centre-cropped image (PPM),
/// its saliency heatmap at `layer` (PGM) and both side by side (PPM). Names
/// are sample<i>_true<label>_pred<prediction>_{image,heatmap,composite}.
/// Returns the paths written.
std::vector<std::string> export_heatmaps(const std::string& checkpoint_path,
                                         const LabeledDataset& ds,
                                         const std::string& layer,
                                         std::size_t n, const std::string& out_dir);

}  // namespace occaug
