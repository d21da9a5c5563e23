#include "occaug/core/image.hpp"

#include <fstream>

#include "occaug/core/error.hpp"

namespace occaug {

void write_pnm(const RawImage& image, const std::string& path) {
  if (image.channels != 1 && image.channels != 3) {
    throw DomainError("write_pnm: expected 1 or 3 channels, got " +
                      std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << (image.channels == 1 ? "P5\n" : "P6\n") << image.width << ' '
      << image.height << "\n255\n";
  for (std::size_t i = 0; i < image.height; ++i) {
    for (std::size_t j = 0; j < image.width; ++j) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        out.put(static_cast<char>(image.at(c, i, j)));
      }
    }
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

RawImage side_by_side(const std::vector<RawImage>& images) {
  if (images.empty()) throw DomainError("side_by_side: no images");
  const std::size_t height = images.front().height;
  std::size_t width = 0;
  std::size_t channels = 1;
  for (const auto& im : images) {
    if (im.height != height) {
      throw ShapeError("side_by_side: dimension 'height' differs (" +
                       std::to_string(im.height) + " vs " +
                       std::to_string(height) + ")");
    }
    if (im.channels != 1 && im.channels != 3) {
      throw DomainError("side_by_side: expected 1 or 3 channels");
    }
    width += im.width;
    if (im.channels == 3) channels = 3;
  }
  RawImage out(channels, height, width);
  std::size_t x0 = 0;
  for (const auto& im : images) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t src_c = im.channels == 1 ? 0 : c;
      for (std::size_t i = 0; i < height; ++i) {
        for (std::size_t j = 0; j < im.width; ++j) {
          out.at(c, i, x0 + j) = im.at(src_c, i, j);
        }
      }
    }
    x0 += im.width;
  }
  return out;
}

}  // namespace occaug
