#pragma once

#include <cstddef>

#include "occaug/core/tensor.hpp"

namespace occaug {

/// Bilinear resize of a [h, w] map to [height, width] using half-pixel
/// centres: output (i, j) samples source ((i + 0.5) h / H - 0.5,
/// (j + 0.5) w / W - 0.5), clamped to the border.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& map, std::size_t height,
                            std::size_t width);

}  // namespace occaug
