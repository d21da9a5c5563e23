#include "occaug/core/resample.hpp"

#include <algorithm>
#include <cmath>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

Tap source_tap(std::size_t out_index, std::size_t in_size,
               std::size_t out_size) {
  double src = (static_cast<double>(out_index) + 0.5) *
                   static_cast<double>(in_size) /
                   static_cast<double>(out_size) -
               0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
  const auto lo = static_cast<std::size_t>(std::floor(src));
  const std::size_t hi = std::min(lo + 1, in_size - 1);
  return {lo, hi, src - static_cast<double>(lo)};
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& map, std::size_t height,
                            std::size_t width) {
  if (map.rank() != 2) {
    throw ShapeError("bilinear_upsample expects a rank-2 map, got " +
                     shape_to_string(map.shape()));
  }
  if (height == 0 || width == 0) {
    throw ShapeError("bilinear_upsample target size must be positive");
  }
  const std::size_t h = map.dim(0), w = map.dim(1);
  Tensor<T> out({height, width});
  std::vector<Tap> cols(width);
  for (std::size_t j = 0; j < width; ++j) cols[j] = source_tap(j, w, width);
  for (std::size_t i = 0; i < height; ++i) {
    const Tap r = source_tap(i, h, height);
    const T* top = map.ptr() + r.lo * w;
    const T* bottom = map.ptr() + r.hi * w;
    for (std::size_t j = 0; j < width; ++j) {
      const Tap& c = cols[j];
      const double upper = top[c.lo] + c.frac * (top[c.hi] - top[c.lo]);
      const double lower =
          bottom[c.lo] + c.frac * (bottom[c.hi] - bottom[c.lo]);
      out[i * width + j] = static_cast<T>(upper + r.frac * (lower - upper));
    }
  }
  return out;
}

template Tensor<float> bilinear_upsample(const Tensor<float>&, std::size_t,
                                         std::size_t);
template Tensor<double> bilinear_upsample(const Tensor<double>&, std::size_t,
                                          std::size_t);

}  // namespace occaug
