#pragma once

#include <cstddef>
#include <span>

#include "occaug/core/graph.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/core/tensor.hpp"

namespace occaug {

/// Inverted dropout factors: each element is 1/p_keep with probability
/// p_keep, otherwise 0.
template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double p_keep, Rng& rng);

/// Per (b, c) slice factor, 1/p_keep with probability p_keep, else 0,
/// broadcast over the slice.
template <typename T>
Tensor<T> spatial_dropout_mask(const Shape& shape, double p_keep, Rng& rng);

/// Seed rate for DropBlock,
/// ((1 - p_keep) / b^2) * (H W) / ((H - b + 1)(W - b + 1)).
double drop_block_gamma(double p_keep, int block_size, std::size_t height,
                        std::size_t width);

/// DropBlock factors for an NCHW shape. Seeds are drawn Bernoulli(gamma) at
/// every top-left position where a block fits; each seed zeros a
/// block_size x block_size square. Surviving entries of a slice are scaled by
/// (H W) / (number kept) so the slice mean is preserved; a fully dropped slice
/// stays zero.
template <typename T>
Tensor<T> drop_block_mask(const Shape& shape, double p_keep, int block_size,
                          Rng& rng);

template <typename T>
Var<T> dropout(Var<T> input, double p_keep, Rng& rng, bool training);
template <typename T>
Var<T> spatial_dropout(Var<T> input, double p_keep, Rng& rng, bool training);
template <typename T>
Var<T> drop_block(Var<T> input, double p_keep, int block_size, Rng& rng,
                  bool training);

/// Smoothed one-hot targets: label gets 1 - eps + eps/K, others eps/K.
template <typename T>
Tensor<T> label_smooth(std::span<const int> labels, std::size_t num_classes,
                       double eps);

}  // namespace occaug
