#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "occaug/core/rng.hpp"
#include "occaug/core/tensor.hpp"

namespace occaug {

/// Single-channel binary occlusion pattern; 1 keeps a pixel, 0 occludes it.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, std::uint8_t fill = 1);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  std::uint8_t& at(std::size_t i, std::size_t j) { return bits_[i * width_ + j]; }
  std::uint8_t at(std::size_t i, std::size_t j) const {
    return bits_[i * width_ + j];
  }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  /// Zeroes rows [top, top + h) x cols [left, left + w), clipped to bounds.
  void occlude_rect(long top, long left, long h, long w);

  std::size_t occluded_count() const;
  double occluded_fraction() const;
  bool all_kept() const { return occluded_count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct HideSeekParams {
  int grid = 4;
  double p_keep_patch = 0.5;
  double p_keep_image = 0.0;

  friend bool operator==(const HideSeekParams&, const HideSeekParams&) = default;
};

struct CutoutParams {
  int count = 1;
  int side = 8;

  friend bool operator==(const CutoutParams&, const CutoutParams&) = default;
};

/// With probability p_keep_image the mask is all ones; otherwise each cell of
/// a grid x grid partition is dropped independently with probability
/// 1 - p_keep_patch. The grid must divide both sides.
Mask hide_and_seek_mask(const HideSeekParams& p, std::size_t height,
                        std::size_t width, Rng& rng);

/// `count` squares of side `side`, each centred on a uniformly drawn pixel and
/// clipped to the image. The top/left half of an even side is the smaller
/// one: rows cy - floor((side - 1) / 2) through that plus side - 1.
Mask cutout_mask(const CutoutParams& p, std::size_t height, std::size_t width,
                 Rng& rng);

/// image[c, i, j] * mask[i, j] for a [C, H, W] or [B, C, H, W] image with
/// B == 1. Normalised images make zero the mean colour.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& image, const Mask& mask);

/// In-place variant over `channels` planes of mask.size() values each.
template <typename T>
void apply_mask_inplace(T* image, std::size_t channels, const Mask& mask);

struct FractionEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

FractionEstimate expected_occlusion_fraction(const HideSeekParams& p,
                                             std::size_t height,
                                             std::size_t width,
                                             std::size_t trials, Rng& rng);
FractionEstimate expected_occlusion_fraction(const CutoutParams& p,
                                             std::size_t height,
                                             std::size_t width,
                                             std::size_t trials, Rng& rng);

/// Continuous-centre expectation of a single Cutout square's occluded
/// fraction, prod over axes of (S - S^2 / (4 L)) / L. Requires S <= H, W.
double cutout_expected_fraction(int side, std::size_t height,
                                std::size_t width);

/// Binary PGM, kept pixels 255 and occluded pixels 0.
void write_mask_pgm(const Mask& mask, const std::string& path);

}  // namespace occaug
