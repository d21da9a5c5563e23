#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "occaug/core/image.hpp"

namespace occaug {

enum class Split { train, val, val_occluded };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Labeled 8-bit images of one shape, stored back to back.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t num_classes, std::size_t channels,
                 std::size_t height, std::size_t width,
                 Split split = Split::train);

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t image_size() const noexcept { return channels_ * height_ * width_; }
  Split split() const noexcept { return split_; }
  void set_split(Split split) noexcept { split_ = split; }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::span<const std::uint8_t> pixels(std::size_t i) const;
  std::span<std::uint8_t> mutable_pixels(std::size_t i);
  RawImage image(std::size_t i) const;

  /// Appends one image; its shape must match and the label lie in [0, K).
  void add(std::span<const std::uint8_t> pixels, int label);
  void add(const RawImage& image, int label);

  std::vector<std::size_t> class_histogram() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t num_classes_ = 0;
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  Split split_ = Split::train;
  std::vector<std::uint8_t> data_;
  std::vector<int> labels_;
};

/// LDS1 layout, little-endian: "LDS1", u32 K, u32 count, u8 C, u16 H, u16 W,
/// then `count` records of (u16 label, C*H*W bytes).
std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes,
                              Split split = Split::train);

void save_binary_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_binary_dataset(const std::string& path,
                                   Split split = Split::train);

struct ChannelStats {
  std::vector<double> mean;  // in [0, 1] pixel units
  std::vector<double> std;   // population deviation, floored at 1e-6
};

ChannelStats dataset_mean_std(const LabeledDataset& ds);

}  // namespace occaug
