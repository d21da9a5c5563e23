#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace occaug {

/// 8-bit image stored channel-major, C x H x W.
struct RawImage {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(std::size_t c, std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  std::uint8_t& at(std::size_t c, std::size_t i, std::size_t j) {
    return pixels[(c * height + i) * width + j];
  }
  std::uint8_t at(std::size_t c, std::size_t i, std::size_t j) const {
    return pixels[(c * height + i) * width + j];
  }

  friend bool operator==(const RawImage&, const RawImage&) = default;
};

/// Writes a 1-channel image as binary PGM or a 3-channel image as binary PPM.
void write_pnm(const RawImage& image, const std::string& path);

/// Places images of equal height side by side. Single-channel images are
/// replicated to three channels when mixed with colour ones.
RawImage side_by_side(const std::vector<RawImage>& images);

}  // namespace occaug
