#include "occaug/train/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <set>

#include "occaug/core/binary_io.hpp"
#include "occaug/core/error.hpp"

namespace occaug {
namespace {

constexpr char kMagic[4] = {'O', 'C', 'S', 'M'};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

template <typename V>
std::vector<std::uint8_t> pack(std::span<const V> values) {
  ByteWriter w;
  for (V v : values) {
    if constexpr (std::is_same_v<V, float>) w.f32(v);
    else if constexpr (std::is_same_v<V, double>) w.f64(v);
    else w.u64(v);
  }
  return std::move(w.buffer());
}

}  // namespace

void Checkpoint::put(Entry e) {
  if (e.name.empty() || e.name.size() > 65535) {
    throw DomainError("checkpoint: entry name length must lie in [1, 65535]");
  }
  if (contains(e.name)) throw DomainError("checkpoint: duplicate entry '" + e.name + "'");
  if (e.shape.size() > 255) throw DomainError("checkpoint: rank exceeds 255");
  entries_.push_back(std::move(e));
}

void Checkpoint::put_f32(const std::string& name, const Shape& shape,
                         std::span<const float> v) {
  if (shape_numel(shape) != v.size()) throw ShapeError("checkpoint: '" + name + "' size mismatch");
  put({name, DType::f32, shape, pack(v)});
}

void Checkpoint::put_f64(const std::string& name, const Shape& shape,
                         std::span<const double> v) {
  if (shape_numel(shape) != v.size()) throw ShapeError("checkpoint: '" + name + "' size mismatch");
  put({name, DType::f64, shape, pack(v)});
}

void Checkpoint::put_u64(const std::string& name, std::span<const std::uint64_t> v) {
  put({name, DType::u64, {v.size()}, pack(v)});
}

void Checkpoint::put_text(const std::string& name, const std::string& text) {
  put({name, DType::u8, {text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())});
}

template <typename T>
void Checkpoint::put_tensor(const std::string& name, const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, float>) put_f32(name, t.shape(), t.data());
  else put_f64(name, t.shape(), t.data());
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

const Checkpoint::Entry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw FormatError("checkpoint: missing entry '" + name + "'");
}

template <typename T>
std::vector<T> Checkpoint::get_real(const std::string& name, const Shape& shape) const {
  const Entry& e = entry(name);
  if (e.shape != shape) {
    throw FormatError("checkpoint: '" + name + "' has shape " + shape_to_string(e.shape) +
                      ", expected " + shape_to_string(shape));
  }
  ByteReader r(e.payload.data(), e.payload.size(), name);
  std::vector<T> out(shape_numel(shape));
  for (auto& v : out) {
    if (e.dtype == DType::f32) v = static_cast<T>(r.f32());
    else if (e.dtype == DType::f64) v = static_cast<T>(r.f64());
    else throw FormatError("checkpoint: '" + name + "' is not a real array");
  }
  return out;
}

std::vector<std::uint64_t> Checkpoint::get_u64(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::u64) throw FormatError("checkpoint: '" + name + "' is not u64");
  ByteReader r(e.payload.data(), e.payload.size(), name);
  std::vector<std::uint64_t> out(shape_numel(e.shape));
  for (auto& v : out) v = r.u64();
  return out;
}

std::string Checkpoint::get_text(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.dtype != DType::u8) throw FormatError("checkpoint: '" + name + "' is not text");
  return std::string(e.payload.begin(), e.payload.end());
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(entries_.size()));
  std::vector<std::size_t> offset_slots;
  for (const auto& e : entries_) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.text(e.name);
    w.u8(static_cast<std::uint8_t>(e.dtype));
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    offset_slots.push_back(w.size());
    w.u64(0);
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    w.patch_u64(offset_slots[i], w.size());
    w.bytes(entries_[i].payload.data(), entries_[i].payload.size());
  }
  return std::move(w.buffer());
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size(), "checkpoint");
  r.require(12);
  if (!std::equal(kMagic, kMagic + 4, r.take(4))) throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("checkpoint: version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kVersion) + ")");
  }
  const std::uint32_t count = r.u32();
  struct Dir {
    Entry e;
    std::uint64_t offset;
  };
  std::vector<Dir> dir;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    Dir d;
    d.e.name = r.text(r.u16());
    if (!names.insert(d.e.name).second) {
      throw FormatError("checkpoint: duplicate entry '" + d.e.name + "'");
    }
    const std::uint8_t dt = r.u8();
    if (dt > static_cast<std::uint8_t>(DType::u8)) {
      throw FormatError("checkpoint: '" + d.e.name + "' has unknown dtype " + std::to_string(dt));
    }
    d.e.dtype = static_cast<DType>(dt);
    const std::uint8_t rank = r.u8();
    for (std::uint8_t k = 0; k < rank; ++k) d.e.shape.push_back(r.u32());
    d.offset = r.u64();
    dir.push_back(std::move(d));
  }
  Checkpoint ck;
  for (auto& d : dir) {
    const std::size_t n = shape_numel(d.e.shape) * dtype_size(d.e.dtype);
    if (d.offset > bytes.size() || n > bytes.size() - d.offset) {
      throw FormatError("checkpoint: payload of '" + d.e.name + "' (" + std::to_string(n) +
                        " bytes at offset " + std::to_string(d.offset) +
                        ") runs past the end of " + std::to_string(bytes.size()) + " bytes");
    }
    d.e.payload.assign(bytes.begin() + static_cast<long>(d.offset),
                       bytes.begin() + static_cast<long>(d.offset + n));
    ck.entries_.push_back(std::move(d.e));
  }
  return ck;
}

void Checkpoint::save(const std::string& path) const { write_file_atomic(path, encode()); }

Checkpoint Checkpoint::load(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

template <typename T>
void store_model(Checkpoint& ck, Model<T>& model) {
  for (const auto& p : model.parameters()) ck.put_tensor("param/" + p.name, *p.tensor);
  for (const auto& b : model.batch_norms()) {
    const Shape shape{b.state->running_mean.size()};
    ck.put_tensor("bn/" + b.name + "/mean", Tensor<T>(shape, b.state->running_mean));
    ck.put_tensor("bn/" + b.name + "/var", Tensor<T>(shape, b.state->running_var));
    const std::uint64_t init = b.state->initialized ? 1 : 0;
    ck.put_u64("bn/" + b.name + "/initialized", std::span<const std::uint64_t>(&init, 1));
  }
}

template <typename T>
void restore_model(const Checkpoint& ck, Model<T>& model) {
  // Decode everything first; assignment below cannot fail.
  std::vector<std::vector<T>> params;
  for (const auto& p : model.parameters()) {
    params.push_back(ck.get_real<T>("param/" + p.name, p.tensor->shape()));
  }
  struct Bn {
    std::vector<T> mean, var;
    bool init;
  };
  std::vector<Bn> norms;
  for (const auto& b : model.batch_norms()) {
    const auto flag = ck.get_u64("bn/" + b.name + "/initialized");
    if (flag.size() != 1) throw FormatError("checkpoint: bad flag for '" + b.name + "'");
    const Shape shape{b.state->running_mean.size()};
    norms.push_back({ck.get_real<T>("bn/" + b.name + "/mean", shape),
                     ck.get_real<T>("bn/" + b.name + "/var", shape),
                     flag[0] != 0});
  }
  auto ps = model.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::copy(params[i].begin(), params[i].end(), ps[i].tensor->data().begin());
  }
  auto bs = model.batch_norms();
  for (std::size_t i = 0; i < bs.size(); ++i) {
    bs[i].state->running_mean = norms[i].mean;
    bs[i].state->running_var = norms[i].var;
    bs[i].state->initialized = norms[i].init;
  }
}

template <typename T>
Checkpoint make_training_checkpoint(Trainer<T>& trainer, const std::string& config_text) {
  Checkpoint ck;
  store_model(ck, trainer.model());
  const auto params = trainer.model().parameters();
  const auto& vel = trainer.optimizer().velocities();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.put_tensor("opt/velocity/" + params[i].name, vel[i]);
  }
  ck.put_u64("rng/data", trainer.data_rng().save_state());
  ck.put_u64("rng/model", trainer.model().rng().save_state());
  const std::uint64_t epoch = static_cast<std::uint64_t>(trainer.next_epoch());
  ck.put_u64("epoch", std::span<const std::uint64_t>(&epoch, 1));
  ck.put_text("config", config_text);
  return ck;
}

template <typename T>
void restore_training(const Checkpoint& ck, Trainer<T>& trainer) {
  const auto params = trainer.model().parameters();
  std::vector<std::vector<T>> vel;
  for (const auto& p : params) {
    vel.push_back(ck.get_real<T>("opt/velocity/" + p.name, p.tensor->shape()));
  }
  const auto data_state = ck.get_u64("rng/data");
  const auto model_state = ck.get_u64("rng/model");
  Rng data_rng, model_rng;
  data_rng.load_state(data_state);
  model_rng.load_state(model_state);
  const auto epoch = ck.get_u64("epoch");
  if (epoch.size() != 1) throw FormatError("checkpoint: bad epoch entry");
  if (epoch[0] > static_cast<std::uint64_t>(trainer.options().schedule.total_epochs)) {
    throw FormatError("checkpoint: epoch " + std::to_string(epoch[0]) +
                      " beyond the configured schedule");
  }
  // restore_model validates before writing, and nothing after it can throw.
  restore_model(ck, trainer.model());
  auto& v = trainer.optimizer().velocities();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::copy(vel[i].begin(), vel[i].end(), v[i].data().begin());
  }
  trainer.data_rng() = data_rng;
  trainer.model().rng() = model_rng;
  trainer.set_next_epoch(static_cast<int>(epoch[0]));
}

template void Checkpoint::put_tensor(const std::string&, const Tensor<float>&);
template void Checkpoint::put_tensor(const std::string&, const Tensor<double>&);
template std::vector<float> Checkpoint::get_real(const std::string&, const Shape&) const;
template std::vector<double> Checkpoint::get_real(const std::string&, const Shape&) const;
template void store_model(Checkpoint&, Model<float>&);
template void store_model(Checkpoint&, Model<double>&);
template void restore_model(const Checkpoint&, Model<float>&);
template void restore_model(const Checkpoint&, Model<double>&);
template Checkpoint make_training_checkpoint(Trainer<float>&, const std::string&);
template Checkpoint make_training_checkpoint(Trainer<double>&, const std::string&);
template void restore_training(const Checkpoint&, Trainer<float>&);
template void restore_training(const Checkpoint&, Trainer<double>&);

}  // namespace occaug
