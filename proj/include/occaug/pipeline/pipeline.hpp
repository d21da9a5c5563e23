#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "occaug/core/image.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/core/tensor.hpp"
#include "occaug/data/dataset.hpp"
#include "occaug/nn/model.hpp"
#include "occaug/occlusion/mask.hpp"
#include "occaug/saliency/saliency.hpp"

namespace occaug {

struct PreprocessParams {
  int crop = 32;
  double flip_prob = 0.5;
  std::vector<double> mean{0.0, 0.0, 0.0};
  std::vector<double> std{1.0, 1.0, 1.0};

  std::vector<std::string> violations(std::size_t channels, std::size_t height,
                                      std::size_t width) const;

  friend bool operator==(const PreprocessParams&, const PreprocessParams&) = default;
};

/// Random crop, horizontal flip with flip_prob, scale to [0, 1], then
/// (x - mean) / std per channel. Writes C x crop x crop values to `out`.
/// Draws, in order: crop top, crop left, flip.
template <typename T>
void preprocess_into(std::span<const std::uint8_t> raw, std::size_t channels,
                     std::size_t height, std::size_t width,
                     const PreprocessParams& p, Rng& rng, T* out);

template <typename T>
Tensor<T> preprocess(const RawImage& image, const PreprocessParams& p, Rng& rng);

/// Deterministic evaluation view: centre crop (top = (H - crop) / 2), no
/// flip, same normalisation.
template <typename T>
void preprocess_eval_into(std::span<const std::uint8_t> raw,
                          std::size_t channels, std::size_t height,
                          std::size_t width, const PreprocessParams& p, T* out);

template <typename T>
Tensor<T> preprocess_eval(const RawImage& image, const PreprocessParams& p);

enum class OccluderKind { none, hide_seek, cutout, saliency };

std::string_view to_string(OccluderKind kind);
OccluderKind parse_occluder_kind(std::string_view text);

/// Produces the occlusion mask for one preprocessed image. Whether an image
/// is occluded at all is decided by the batch strategy, so the Hide-and-Seek
/// image-level keep probability is not consulted here.
template <typename T>
class Occluder {
 public:
  Occluder() = default;
  static Occluder none() { return Occluder(); }
  static Occluder hide_seek(HideSeekParams p);
  static Occluder cutout(CutoutParams p);
  /// Keeps a reference to `model`, which must outlive the occluder.
  static Occluder saliency(SaliencyOccluderParams p, Model<T>& model);

  OccluderKind kind() const noexcept { return kind_; }

  /// Mask for a normalised [C, H, W] image. `none` yields all ones.
  Mask mask_for(const T* image, std::size_t channels, std::size_t height,
                std::size_t width, int label, Rng& rng) const;

 private:
  OccluderKind kind_ = OccluderKind::none;
  HideSeekParams hide_seek_;
  CutoutParams cutout_;
  SaliencyOccluderParams saliency_;
  Model<T>* model_ = nullptr;
};

/// Training batch with per-entry provenance.
template <typename T>
struct Batch {
  Tensor<T> images;                  // [N, C, crop, crop]
  std::vector<int> labels;
  std::vector<std::size_t> source;   // dataset index of each entry
  std::vector<std::uint8_t> occluded;
  std::vector<Mask> masks;           // all ones for unoccluded entries

  std::size_t size() const noexcept { return labels.size(); }
};

enum class Strategy { plain, nonjoint, joint, batch_augment, dataset_augment };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view text);

struct BatchPlan {
  Strategy strategy = Strategy::plain;
  /// Copies of each image per epoch: 2 for joint, 1 for plain and nonjoint,
  /// M for the augment strategies.
  int copies = 1;
  /// Probability that an entry is left unoccluded (nonjoint and augment
  /// strategies; joint fixes the clean and occluded halves).
  double p_keep_image = 1.0;
  OccluderKind occluder = OccluderKind::none;

  std::vector<std::string> violations() const;

  friend bool operator==(const BatchPlan&, const BatchPlan&) = default;
};

/// Each listed image preprocessed once, no occlusion.
template <typename T>
Batch<T> assemble_plain(const LabeledDataset& ds,
                        std::span<const std::size_t> indices,
                        const PreprocessParams& p, Rng& rng);

/// Each listed image preprocessed once, then occluded unless a
/// Bernoulli(p_keep_image) draw keeps it clean.
template <typename T>
Batch<T> assemble_nonjoint(const LabeledDataset& ds,
                           std::span<const std::size_t> indices,
                           const PreprocessParams& p, const Occluder<T>& occluder,
                           double p_keep_image, Rng& rng);

/// Duplicates a preprocessed batch: entries [0, B) are the input bit for bit,
/// entries [B, 2B) the same images occluded.
template <typename T>
Batch<T> assemble_joint(const Batch<T>& batch, const Occluder<T>& occluder,
                        Rng& rng);

/// Each raw image repeated `copies` times before preprocessing; every copy
/// is preprocessed and then kept clean or occluded independently. Copies of
/// one image sit in adjacent slots.
template <typename T>
Batch<T> assemble_batch_augment(const LabeledDataset& ds,
                                std::span<const std::size_t> indices,
                                const PreprocessParams& p,
                                const Occluder<T>& occluder, int copies,
                                double p_keep_image, Rng& rng);

/// Index batches of one epoch over `count` images: a shuffled pass chunked
/// into batches of `batch_size` (the last may be short).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count,
                                                    std::size_t batch_size,
                                                    Rng& rng);

/// `copies` independently shuffled passes, each chunked on its own, so no
/// batch holds the same image twice.
std::vector<std::vector<std::size_t>> dataset_augment_batches(
    std::size_t count, std::size_t batch_size, int copies, Rng& rng);

/// Index batches for one epoch under `plan`.
std::vector<std::vector<std::size_t>> plan_epoch(const BatchPlan& plan,
                                                 std::size_t count,
                                                 std::size_t batch_size,
                                                 Rng& rng);

/// Training batch for one index batch under `plan`.
template <typename T>
Batch<T> assemble(const BatchPlan& plan, const LabeledDataset& ds,
                  std::span<const std::size_t> indices,
                  const PreprocessParams& p, const Occluder<T>& occluder,
                  Rng& rng);

/// Evaluation batch: centre crops, no occlusion.
template <typename T>
Batch<T> assemble_eval(const LabeledDataset& ds,
                       std::span<const std::size_t> indices,
                       const PreprocessParams& p);

}  // namespace occaug
