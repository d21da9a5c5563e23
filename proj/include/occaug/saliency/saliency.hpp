#pragma once

#include <string>

#include "occaug/core/image.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/core/tensor.hpp"
#include "occaug/nn/model.hpp"
#include "occaug/occlusion/mask.hpp"

namespace occaug {

/// Per-location scores at one layer, shape [h, w].
struct SaliencyMap {
  std::string layer;
  Tensor<double> values;
};

/// s[i, j] = ||g[:, i, j]|| * ||x[:, i, j]||, norms over channels, for one
/// sample's activation and gradient, each [K, h, w] or [1, K, h, w].
template <typename T>
Tensor<double> saliency_from_hooks(const Tensor<T>& activation,
                                   const Tensor<T>& gradient);

/// Saliency of `image` ([C, H, W] or [1, C, H, W], normalised) at `layer`
/// for the cross-entropy of its true label. Runs in the model's current mode
/// without stochastic regularizers, batch-norm statistic updates or
/// parameter gradients, so the model is left exactly as it was.
template <typename T>
SaliencyMap saliency_map(Model<T>& model, const Tensor<T>& image, int label,
                         const std::string& layer);

/// Deepest post-ReLU layer whose feature map is at least 8x8 at the default
/// 32x32 input: "stage2.relu2" for MiniSkip, "relu2" for MiniPlain.
std::string default_saliency_layer(ArchName arch);

struct PatchPosition {
  int top = 0;
  int left = 0;

  friend bool operator==(const PatchPosition&, const PatchPosition&) = default;
};

/// Top-left corner of the side x side window, on the stride grid, with the
/// largest sum. Window sums come from a convolution with a box filter of
/// ones; ties go to the smallest (top, left).
PatchPosition extract_max_patch(const Tensor<double>& map, int side, int stride);

struct SaliencyOccluderParams {
  std::string layer;  // empty selects default_saliency_layer
  int side = 8;
  int jitter = 2;
  int stride = 1;

  friend bool operator==(const SaliencyOccluderParams&,
                         const SaliencyOccluderParams&) = default;
};

struct PatchPlacement {
  PatchPosition peak;    // from extract_max_patch
  int dy = 0;            // jitter drawn for each axis
  int dx = 0;
  PatchPosition placed;  // after jitter and clamping
};

/// Max patch of an image-resolution map, shifted by integer jitter drawn
/// uniformly from [-jitter, jitter] per axis and clamped so the patch stays
/// inside the map.
PatchPlacement place_saliency_patch(const Tensor<double>& map_image,
                                    const SaliencyOccluderParams& p, Rng& rng);

/// Mask occluding the jittered max-saliency patch of `image`.
template <typename T>
Mask saliency_occlusion_mask(Model<T>& model, const Tensor<T>& image, int label,
                             const SaliencyOccluderParams& p, Rng& rng);

/// Map scaled linearly to [0, 255] by its maximum; a map that is zero
/// everywhere renders black.
RawImage heatmap_image(const Tensor<double>& map);

}  // namespace occaug
