#include "occaug/nn/regularizers.hpp"

#include <algorithm>
#include <string>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

void check_keep_prob(double p_keep, const char* op) {
  if (!(p_keep > 0.0 && p_keep <= 1.0)) {
    throw DomainError(std::string(op) + ": p_keep must lie in (0, 1], got " +
                      std::to_string(p_keep));
  }
}

void check_nchw(const Shape& shape, const char* op) {
  if (shape.size() != 4) {
    throw ShapeError(std::string(op) + ": expected NCHW input, got " +
                     shape_to_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double p_keep, Rng& rng) {
  check_keep_prob(p_keep, "dropout");
  Tensor<T> mask(shape);
  const T keep = static_cast<T>(1.0 / p_keep);
  for (auto& v : mask.storage()) v = rng.bernoulli(p_keep) ? keep : T{0};
  return mask;
}

template <typename T>
Tensor<T> spatial_dropout_mask(const Shape& shape, double p_keep, Rng& rng) {
  check_keep_prob(p_keep, "spatial_dropout");
  check_nchw(shape, "spatial_dropout");
  Tensor<T> mask(shape);
  const std::size_t slice = shape[2] * shape[3];
  const T keep = static_cast<T>(1.0 / p_keep);
  for (std::size_t s = 0; s < shape[0] * shape[1]; ++s) {
    const T v = rng.bernoulli(p_keep) ? keep : T{0};
    std::fill_n(mask.ptr() + s * slice, slice, v);
  }
  return mask;
}

double drop_block_gamma(double p_keep, int block_size, std::size_t height,
                        std::size_t width) {
  const auto b = static_cast<std::size_t>(block_size);
  if (block_size < 1 || b > std::min(height, width)) {
    throw DomainError("drop_block: block_size " + std::to_string(block_size) +
                      " must lie in [1, " +
                      std::to_string(std::min(height, width)) + "]");
  }
  const double area = static_cast<double>(height * width);
  const double valid =
      static_cast<double>((height - b + 1) * (width - b + 1));
  return (1.0 - p_keep) / static_cast<double>(b * b) * area / valid;
}

template <typename T>
Tensor<T> drop_block_mask(const Shape& shape, double p_keep, int block_size,
                          Rng& rng) {
  check_keep_prob(p_keep, "drop_block");
  check_nchw(shape, "drop_block");
  const std::size_t H = shape[2], W = shape[3];
  const double gamma =
      std::clamp(drop_block_gamma(p_keep, block_size, H, W), 0.0, 1.0);
  const auto b = static_cast<std::size_t>(block_size);
  Tensor<T> mask(shape, T{1});
  std::vector<unsigned char> keep(H * W);
  for (std::size_t s = 0; s < shape[0] * shape[1]; ++s) {
    std::fill(keep.begin(), keep.end(), 1);
    for (std::size_t i = 0; i + b <= H; ++i) {
      for (std::size_t j = 0; j + b <= W; ++j) {
        if (!rng.bernoulli(gamma)) continue;
        for (std::size_t di = 0; di < b; ++di) {
          std::fill_n(keep.begin() + (i + di) * W + j, b, 0);
        }
      }
    }
    std::size_t kept = 0;
    for (auto k : keep) kept += k;
    const T scale = kept == 0 ? T{0}
                              : static_cast<T>(static_cast<double>(H * W) /
                                               static_cast<double>(kept));
    T* dst = mask.ptr() + s * H * W;
    for (std::size_t p = 0; p < H * W; ++p) dst[p] = keep[p] ? scale : T{0};
  }
  return mask;
}

template <typename T>
Var<T> dropout(Var<T> input, double p_keep, Rng& rng, bool training) {
  check_keep_prob(p_keep, "dropout");
  if (!training || p_keep == 1.0) return input;
  return scale_by(input, dropout_mask<T>(input.shape(), p_keep, rng));
}

template <typename T>
Var<T> spatial_dropout(Var<T> input, double p_keep, Rng& rng, bool training) {
  check_keep_prob(p_keep, "spatial_dropout");
  check_nchw(input.shape(), "spatial_dropout");
  if (!training || p_keep == 1.0) return input;
  return scale_by(input, spatial_dropout_mask<T>(input.shape(), p_keep, rng));
}

template <typename T>
Var<T> drop_block(Var<T> input, double p_keep, int block_size, Rng& rng,
                  bool training) {
  check_keep_prob(p_keep, "drop_block");
  check_nchw(input.shape(), "drop_block");
  drop_block_gamma(p_keep, block_size, input.shape()[2], input.shape()[3]);
  if (!training || p_keep == 1.0) return input;
  return scale_by(input,
                  drop_block_mask<T>(input.shape(), p_keep, block_size, rng));
}

template <typename T>
Tensor<T> label_smooth(std::span<const int> labels, std::size_t num_classes,
                       double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) {
    throw DomainError("label_smooth: eps must lie in [0, 1), got " +
                      std::to_string(eps));
  }
  if (num_classes == 0) throw DomainError("label_smooth: no classes");
  const double off = eps / static_cast<double>(num_classes);
  const double on = 1.0 - eps + off;
  Tensor<T> out({labels.size(), num_classes}, static_cast<T>(off));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes) {
      throw DomainError("label_smooth: label " + std::to_string(labels[r]) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
    out[r * num_classes + static_cast<std::size_t>(labels[r])] =
        static_cast<T>(on);
  }
  return out;
}

#define OCCAUG_INSTANTIATE_REG(T)                                              \
  template Tensor<T> dropout_mask(const Shape&, double, Rng&);                 \
  template Tensor<T> spatial_dropout_mask(const Shape&, double, Rng&);         \
  template Tensor<T> drop_block_mask(const Shape&, double, int, Rng&);         \
  template Var<T> dropout(Var<T>, double, Rng&, bool);                         \
  template Var<T> spatial_dropout(Var<T>, double, Rng&, bool);                 \
  template Var<T> drop_block(Var<T>, double, int, Rng&, bool);                 \
  template Tensor<T> label_smooth(std::span<const int>, std::size_t, double);

OCCAUG_INSTANTIATE_REG(float)
OCCAUG_INSTANTIATE_REG(double)

}  // namespace occaug
