#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "occaug/core/tensor.hpp"
#include "occaug/nn/model.hpp"
#include "occaug/train/trainer.hpp"

namespace occaug {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u64 = 2, u8 = 3 };

/// Named typed arrays. The file layout, little-endian throughout:
///   "OCSM", u32 version, u32 entry count,
///   per entry: u16 name length, name, u8 dtype, u8 rank, rank x u32 dims,
///              u64 absolute payload offset,
///   then the payloads.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::vector<std::uint8_t> payload;
  };

  void put_f32(const std::string& name, const Shape& shape, std::span<const float> v);
  void put_f64(const std::string& name, const Shape& shape, std::span<const double> v);
  void put_u64(const std::string& name, std::span<const std::uint64_t> v);
  void put_text(const std::string& name, const std::string& text);
  template <typename T>
  void put_tensor(const std::string& name, const Tensor<T>& t);

  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Values of a float entry converted to T, checked against `shape`.
  template <typename T>
  std::vector<T> get_real(const std::string& name, const Shape& shape) const;
  std::vector<std::uint64_t> get_u64(const std::string& name) const;
  std::string get_text(const std::string& name) const;

  std::vector<std::uint8_t> encode() const;
  /// Parses and validates the whole buffer; throws FormatError on any defect.
  static Checkpoint decode(std::span<const std::uint8_t> bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  void put(Entry e);
  std::vector<Entry> entries_;
};

/// Parameters and batch-norm statistics of a model.
template <typename T>
void store_model(Checkpoint& ck, Model<T>& model);
/// Checks every entry before touching the model, so a mismatch leaves it
/// unchanged.
template <typename T>
void restore_model(const Checkpoint& ck, Model<T>& model);

/// Model, optimizer velocities, both random streams, the next epoch and the
/// run configuration text.
template <typename T>
Checkpoint make_training_checkpoint(Trainer<T>& trainer,
                                    const std::string& config_text);
template <typename T>
void restore_training(const Checkpoint& ck, Trainer<T>& trainer);

}  // namespace occaug
