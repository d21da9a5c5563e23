#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "occaug/data/dataset.hpp"

namespace occaug {

/// Synthetic dataset in which every image carries two independent cues to
/// its class: a large high-contrast glyph at a random position (dominant) and
/// a small low-contrast pattern near a random corner (secondary), over
/// Gaussian pixel noise. Glyphs are random binary cell patterns, one per
/// class, upscaled to the cue size. Images are 3-channel grey.
struct TwoCueSpec {
  int num_classes = 10;
  int image_side = 32;
  int dominant_cells = 4;
  int dominant_size = 12;
  double dominant_contrast = 0.8;
  int secondary_cells = 3;
  int secondary_size = 6;
  double secondary_contrast = 0.3;
  /// Largest inset of the secondary cue from its corner, in pixels.
  int secondary_inset = 2;
  /// Standard deviation of the pixel noise, in [0, 1] intensity units.
  double noise = 0.1;
  std::size_t train_count = 5000;
  std::size_t val_count = 1000;

  /// Every violated constraint, empty when the spec is usable.
  std::vector<std::string> violations() const;

  friend bool operator==(const TwoCueSpec&, const TwoCueSpec&) = default;
};

struct CueBox {
  int top = 0;
  int left = 0;
  int size = 0;

  bool contains(int i, int j) const {
    return i >= top && i < top + size && j >= left && j < left + size;
  }
};

struct TwoCueData {
  LabeledDataset train;
  LabeledDataset val;
  /// val with each dominant box filled with the train mean colour.
  LabeledDataset val_occluded;
  std::vector<CueBox> train_dominant, train_secondary;
  std::vector<CueBox> val_dominant, val_secondary;
  std::vector<std::uint8_t> fill_colour;
  /// Cell patterns, class-major, dominant_cells^2 and secondary_cells^2 each.
  std::vector<std::uint8_t> dominant_patterns, secondary_patterns;
};

/// Deterministic in (spec, seed). Class balance is exact: each split count
/// must be a multiple of num_classes.
TwoCueData generate_two_cue(const TwoCueSpec& spec, std::uint64_t seed);

/// Renders the dominant glyph of `label` as it appears in a noise-free image:
/// size x size intensities in [0, 1].
std::vector<double> render_dominant_glyph(const TwoCueData& data,
                                          const TwoCueSpec& spec, int label);

/// "key = value" lines describing the spec, seed and split counts.
std::string two_cue_manifest(const TwoCueSpec& spec, std::uint64_t seed,
                             const TwoCueData& data);

}  // namespace occaug
