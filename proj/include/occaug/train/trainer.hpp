#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occaug/core/rng.hpp"
#include "occaug/data/dataset.hpp"
#include "occaug/nn/model.hpp"
#include "occaug/pipeline/pipeline.hpp"
#include "occaug/train/optim.hpp"

namespace occaug {

/// One epoch of a training run. Accuracies are percentages.
struct TrainLogRow {
  int epoch = 0;
  double lr = 0.0;
  std::size_t batch_size = 0;  // largest assembled batch of the epoch
  double train_loss = 0.0;
  double train_top1 = 0.0;
  std::optional<double> val_top1, val_top5;
  std::optional<double> val_occluded_top1, val_occluded_top5;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;  // written to the timing file only
};

/// Per-epoch rows. The CSV omits wall time so that identical runs produce
/// identical files; timing goes to a separate CSV.
class TrainLog {
 public:
  void append(const TrainLogRow& row);
  const std::vector<TrainLogRow>& rows() const noexcept { return rows_; }
  bool empty() const noexcept { return rows_.empty(); }

  static std::string header();
  static std::string format_row(const TrainLogRow& row);
  std::string to_csv() const;
  /// Inverse of to_csv(); wall times are not stored and read back as 0.
  static TrainLog from_csv(std::string_view text);
  std::string timing_csv() const;
  void write(const std::string& path) const;
  void write_timing(const std::string& path) const;

 private:
  std::vector<TrainLogRow> rows_;
};

struct TrainerOptions {
  std::size_t batch_size = 128;
  double label_smoothing = 0.0;
  Schedule schedule;
  SgdOptions sgd;
  std::uint64_t seed = 0;
};

/// SGD training loop over one dataset under a BatchPlan. Owns the optimizer
/// state and the data stream; the model owns its regularizer stream.
template <typename T>
class Trainer {
 public:
  Trainer(Model<T>& model, const LabeledDataset& train, PreprocessParams pre,
          BatchPlan plan, Occluder<T> occluder, TrainerOptions options);

  /// Trains epoch `next_epoch()` and advances the counter. Throws
  /// NumericError on a non-finite loss, after recording diagnostic_row().
  TrainLogRow train_epoch();

  int next_epoch() const noexcept { return epoch_; }
  void set_next_epoch(int e) noexcept { epoch_ = e; }
  bool finished() const noexcept { return epoch_ >= options_.schedule.total_epochs; }

  Model<T>& model() noexcept { return *model_; }
  SgdMomentum<T>& optimizer() noexcept { return optimizer_; }
  Rng& data_rng() noexcept { return data_rng_; }
  const TrainerOptions& options() const noexcept { return options_; }
  const TrainLogRow& diagnostic_row() const noexcept { return diagnostic_; }

 private:
  Model<T>* model_;
  const LabeledDataset* train_;
  PreprocessParams pre_;
  BatchPlan plan_;
  Occluder<T> occluder_;
  TrainerOptions options_;
  SgdMomentum<T> optimizer_;
  Rng data_rng_;
  int epoch_ = 0;
  TrainLogRow diagnostic_;
};

/// Percentage of samples whose label ranks within the top k logits, per k.
/// Ranking counts classes with a larger logit, or an equal logit at a lower
/// index. Runs in eval mode on centre crops and restores the previous mode.
template <typename T>
std::vector<double> evaluate_topk(Model<T>& model, const LabeledDataset& ds,
                                  const PreprocessParams& pre,
                                  const std::vector<int>& ks,
                                  std::size_t batch_size = 256);

/// Hit flags of one logits row for the given k values.
template <typename T>
std::vector<bool> topk_hits(std::span<const T> logits, int label,
                            const std::vector<int>& ks);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace occaug
