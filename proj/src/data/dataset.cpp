#include "occaug/data/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "occaug/core/binary_io.hpp"
#include "occaug/core/error.hpp"

namespace occaug {
namespace {

constexpr char kMagic[4] = {'L', 'D', 'S', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 1 + 2 + 2;

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::val_occluded: return "val_occluded";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "val_occluded") return Split::val_occluded;
  throw DomainError("unknown split '" + std::string(text) + "'");
}

LabeledDataset::LabeledDataset(std::size_t num_classes, std::size_t channels,
                               std::size_t height, std::size_t width, Split split)
    : num_classes_(num_classes),
      channels_(channels),
      height_(height),
      width_(width),
      split_(split) {
  if (num_classes == 0) throw DomainError("dataset: class count must be >= 1");
  if (channels == 0 || height == 0 || width == 0) {
    throw DomainError("dataset: image dimensions must be positive");
  }
}

std::span<const std::uint8_t> LabeledDataset::pixels(std::size_t i) const {
  if (i >= size()) throw DomainError("dataset: index " + std::to_string(i) + " out of range");
  return {data_.data() + i * image_size(), image_size()};
}

std::span<std::uint8_t> LabeledDataset::mutable_pixels(std::size_t i) {
  if (i >= size()) throw DomainError("dataset: index " + std::to_string(i) + " out of range");
  return {data_.data() + i * image_size(), image_size()};
}

RawImage LabeledDataset::image(std::size_t i) const {
  RawImage out(channels_, height_, width_);
  const auto p = pixels(i);
  std::copy(p.begin(), p.end(), out.pixels.begin());
  return out;
}

void LabeledDataset::add(std::span<const std::uint8_t> pixels, int label) {
  if (pixels.size() != image_size()) {
    throw ShapeError("dataset: image has " + std::to_string(pixels.size()) +
                     " bytes, expected " + std::to_string(image_size()));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw DomainError("dataset: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(num_classes_) + ")");
  }
  data_.insert(data_.end(), pixels.begin(), pixels.end());
  labels_.push_back(label);
}

void LabeledDataset::add(const RawImage& image, int label) {
  if (image.channels != channels_ || image.height != height_ || image.width != width_) {
    throw ShapeError("dataset: image is " + std::to_string(image.channels) + "x" +
                     std::to_string(image.height) + "x" + std::to_string(image.width) +
                     ", expected " + std::to_string(channels_) + "x" +
                     std::to_string(height_) + "x" + std::to_string(width_));
  }
  add(std::span<const std::uint8_t>(image.pixels), label);
}

std::vector<std::size_t> LabeledDataset::class_histogram() const {
  std::vector<std::size_t> h(num_classes_, 0);
  for (int l : labels_) ++h[static_cast<std::size_t>(l)];
  return h;
}

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds) {
  if (ds.num_classes() > 65536 || ds.channels() > 255 || ds.height() > 65535 ||
      ds.width() > 65535) {
    throw DomainError("dataset: dimensions exceed the LDS1 field widths");
  }
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(ds.num_classes()));
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u8(static_cast<std::uint8_t>(ds.channels()));
  w.u16(static_cast<std::uint16_t>(ds.height()));
  w.u16(static_cast<std::uint16_t>(ds.width()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.u16(static_cast<std::uint16_t>(ds.label(i)));
    const auto p = ds.pixels(i);
    w.bytes(p.data(), p.size());
  }
  return std::move(w.buffer());
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes, Split split) {
  ByteReader r(bytes.data(), bytes.size(), "LDS1");
  r.require(kHeaderBytes);
  if (!std::equal(kMagic, kMagic + 4, r.take(4))) {
    throw FormatError("LDS1: bad magic");
  }
  const std::uint32_t k = r.u32();
  const std::uint32_t count = r.u32();
  const std::size_t c = r.u8();
  const std::size_t h = r.u16();
  const std::size_t w = r.u16();
  if (k == 0) throw FormatError("LDS1: class count is zero");
  if (c == 0 || h == 0 || w == 0) throw FormatError("LDS1: zero image dimension");
  const std::size_t record = 2 + c * h * w;
  const std::size_t expected = kHeaderBytes + record * count;
  if (bytes.size() != expected) {
    throw FormatError("LDS1: expected " + std::to_string(expected) +
                      " bytes for " + std::to_string(count) + " records, found " +
                      std::to_string(bytes.size()));
  }
  LabeledDataset ds(k, c, h, w, split);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t label = r.u16();
    if (label >= k) {
      throw FormatError("LDS1: record " + std::to_string(i) + " has label " +
                        std::to_string(label) + " >= K = " + std::to_string(k));
    }
    ds.add(std::span<const std::uint8_t>(r.take(c * h * w), c * h * w), label);
  }
  return ds;
}

void save_binary_dataset(const LabeledDataset& ds, const std::string& path) {
  write_file_atomic(path, encode_dataset(ds));
}

LabeledDataset load_binary_dataset(const std::string& path, Split split) {
  const auto bytes = read_file(path);
  try {
    return decode_dataset(bytes, split);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

ChannelStats dataset_mean_std(const LabeledDataset& ds) {
  if (ds.empty()) throw DomainError("dataset_mean_std: empty dataset");
  const std::size_t c = ds.channels();
  const std::size_t plane = ds.height() * ds.width();
  const double n = static_cast<double>(ds.size() * plane);
  ChannelStats out{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto p = ds.pixels(i);
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::uint64_t s = 0;
      for (std::size_t k = 0; k < plane; ++k) s += p[ch * plane + k];
      out.mean[ch] += static_cast<double>(s);
    }
  }
  for (auto& m : out.mean) m /= 255.0 * n;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto p = ds.pixels(i);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) {
        const double d = p[ch * plane + k] / 255.0 - out.mean[ch];
        s += d * d;
      }
      out.std[ch] += s;
    }
  }
  for (auto& s : out.std) s = std::max(std::sqrt(s / n), 1e-6);
  return out;
}

}  // namespace occaug
