#include "occaug/occlusion/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError(std::string(name) + " must lie in [0, 1], got " +
                      std::to_string(p));
  }
}

void check_extent(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DomainError("mask: empty extent");
}

template <typename Draw>
FractionEstimate estimate(std::size_t trials, Draw draw) {
  if (trials == 0) throw DomainError("expected_occlusion_fraction: trials must be >= 1");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double f = draw().occluded_fraction();
    sum += f;
    sum_sq += f * f;
  }
  const double n = static_cast<double>(trials);
  FractionEstimate out;
  out.mean = sum / n;
  if (trials > 1) {
    const double var = std::max(0.0, (sum_sq - n * out.mean * out.mean) / (n - 1.0));
    out.std_error = std::sqrt(var / n);
  }
  return out;
}

}  // namespace

Mask::Mask(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), bits_(height * width, fill ? 1 : 0) {}

void Mask::occlude_rect(long top, long left, long h, long w) {
  const long r0 = std::max(top, 0L);
  const long c0 = std::max(left, 0L);
  const long r1 = std::min(top + h, static_cast<long>(height_));
  const long c1 = std::min(left + w, static_cast<long>(width_));
  for (long r = r0; r < r1; ++r) {
    for (long c = c0; c < c1; ++c) {
      bits_[static_cast<std::size_t>(r) * width_ + static_cast<std::size_t>(c)] = 0;
    }
  }
}

std::size_t Mask::occluded_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 0));
}

double Mask::occluded_fraction() const {
  if (bits_.empty()) return 0.0;
  return static_cast<double>(occluded_count()) / static_cast<double>(bits_.size());
}

Mask hide_and_seek_mask(const HideSeekParams& p, std::size_t height,
                        std::size_t width, Rng& rng) {
  check_extent(height, width);
  check_probability(p.p_keep_patch, "p_keep_patch");
  check_probability(p.p_keep_image, "p_keep_image");
  if (p.grid < 1) throw DomainError("hide_and_seek: grid must be >= 1");
  const auto g = static_cast<std::size_t>(p.grid);
  if (height % g != 0 || width % g != 0) {
    throw DomainError("hide_and_seek: grid " + std::to_string(g) +
                      " does not divide " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  Mask mask(height, width);
  if (rng.bernoulli(p.p_keep_image)) return mask;
  const std::size_t ch = height / g;
  const std::size_t cw = width / g;
  for (std::size_t gi = 0; gi < g; ++gi) {
    for (std::size_t gj = 0; gj < g; ++gj) {
      if (!rng.bernoulli(p.p_keep_patch)) {
        mask.occlude_rect(static_cast<long>(gi * ch), static_cast<long>(gj * cw),
                          static_cast<long>(ch), static_cast<long>(cw));
      }
    }
  }
  return mask;
}

Mask cutout_mask(const CutoutParams& p, std::size_t height, std::size_t width,
                 Rng& rng) {
  check_extent(height, width);
  if (p.count < 0) throw DomainError("cutout: count must be >= 0");
  if (p.side < 1) throw DomainError("cutout: side must be >= 1");
  Mask mask(height, width);
  const long before = (p.side - 1) / 2;
  for (int n = 0; n < p.count; ++n) {
    const long cy = rng.uniform_int(0, static_cast<long>(height) - 1);
    const long cx = rng.uniform_int(0, static_cast<long>(width) - 1);
    mask.occlude_rect(cy - before, cx - before, p.side, p.side);
  }
  return mask;
}

template <typename T>
void apply_mask_inplace(T* image, std::size_t channels, const Mask& mask) {
  const auto& bits = mask.bits();
  const std::size_t plane = bits.size();
  for (std::size_t c = 0; c < channels; ++c) {
    T* p = image + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (bits[i] == 0) p[i] = T{0};
    }
  }
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& image, const Mask& mask) {
  const auto& s = image.shape();
  const bool batched = s.size() == 4 && s[0] == 1;
  if (s.size() != 3 && !batched) {
    throw ShapeError("apply_mask: expected [C,H,W] image, got " + shape_to_string(s));
  }
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  if (h != mask.height()) {
    throw ShapeError("apply_mask: dimension 'height' is " + std::to_string(h) +
                     ", mask has " + std::to_string(mask.height()));
  }
  if (w != mask.width()) {
    throw ShapeError("apply_mask: dimension 'width' is " + std::to_string(w) +
                     ", mask has " + std::to_string(mask.width()));
  }
  Tensor<T> out = image;
  out.set_requires_grad(false);
  out.clear_grad();
  apply_mask_inplace(out.ptr(), s[s.size() - 3], mask);
  return out;
}

FractionEstimate expected_occlusion_fraction(const HideSeekParams& p,
                                             std::size_t height,
                                             std::size_t width,
                                             std::size_t trials, Rng& rng) {
  return estimate(trials, [&] { return hide_and_seek_mask(p, height, width, rng); });
}

FractionEstimate expected_occlusion_fraction(const CutoutParams& p,
                                             std::size_t height,
                                             std::size_t width,
                                             std::size_t trials, Rng& rng) {
  return estimate(trials, [&] { return cutout_mask(p, height, width, rng); });
}

double cutout_expected_fraction(int side, std::size_t height, std::size_t width) {
  if (side < 1 || static_cast<std::size_t>(side) > height ||
      static_cast<std::size_t>(side) > width) {
    throw DomainError("cutout_expected_fraction: side must lie in [1, min(H, W)]");
  }
  const double s = side;
  auto axis = [s](double len) { return (s - s * s / (4.0 * len)) / len; };
  return axis(static_cast<double>(height)) * axis(static_cast<double>(width));
}

void write_mask_pgm(const Mask& mask, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << mask.width() << ' ' << mask.height() << "\n255\n";
  for (auto b : mask.bits()) out.put(static_cast<char>(b ? 255 : 0));
  if (!out) throw IoError("write to '" + path + "' failed");
}

template Tensor<float> apply_mask(const Tensor<float>&, const Mask&);
template Tensor<double> apply_mask(const Tensor<double>&, const Mask&);
template void apply_mask_inplace(float*, std::size_t, const Mask&);
template void apply_mask_inplace(double*, std::size_t, const Mask&);

}  // namespace occaug
