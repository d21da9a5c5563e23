#include "occaug/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstring>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

void check_params(const PreprocessParams& p, std::size_t c, std::size_t h,
                  std::size_t w) {
  if (auto v = p.violations(c, h, w); !v.empty()) throw ConfigError(std::move(v));
}

template <typename T>
void normalise(std::span<const std::uint8_t> raw, std::size_t channels,
               std::size_t height, std::size_t width, const PreprocessParams& p,
               std::size_t top, std::size_t left, bool flip, T* out) {
  const auto crop = static_cast<std::size_t>(p.crop);
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = p.mean[c];
    const double inv = 1.0 / p.std[c];
    const std::uint8_t* plane = raw.data() + c * height * width;
    T* dst = out + c * crop * crop;
    for (std::size_t i = 0; i < crop; ++i) {
      const std::uint8_t* row = plane + (top + i) * width + left;
      for (std::size_t j = 0; j < crop; ++j) {
        const std::uint8_t v = row[flip ? crop - 1 - j : j];
        dst[i * crop + j] = static_cast<T>((v / 255.0 - mean) * inv);
      }
    }
  }
}

template <typename T>
Batch<T> empty_batch(const LabeledDataset& ds, std::size_t n,
                     const PreprocessParams& p) {
  check_params(p, ds.channels(), ds.height(), ds.width());
  if (n == 0) throw DomainError("batch: no indices");
  const auto crop = static_cast<std::size_t>(p.crop);
  Batch<T> b;
  b.images = Tensor<T>({n, ds.channels(), crop, crop});
  b.labels.reserve(n);
  b.source.reserve(n);
  b.occluded.reserve(n);
  b.masks.reserve(n);
  return b;
}

template <typename T>
std::size_t sample_size(const Batch<T>& b) {
  const auto& s = b.images.shape();
  return s[1] * s[2] * s[3];
}

/// Occludes entry `n` of `b` in place unless kept by Bernoulli(p_keep_image).
template <typename T>
void maybe_occlude(Batch<T>& b, std::size_t n, const Occluder<T>& occluder,
                   double p_keep_image, Rng& rng) {
  const auto& s = b.images.shape();
  const bool keep = rng.bernoulli(p_keep_image);
  if (keep || occluder.kind() == OccluderKind::none) {
    b.occluded.push_back(0);
    b.masks.emplace_back(s[2], s[3]);
    return;
  }
  T* img = b.images.ptr() + n * sample_size(b);
  Mask m = occluder.mask_for(img, s[1], s[2], s[3], b.labels[n], rng);
  apply_mask_inplace(img, s[1], m);
  b.occluded.push_back(1);
  b.masks.push_back(std::move(m));
}

}  // namespace

std::vector<std::string> PreprocessParams::violations(std::size_t channels,
                                                      std::size_t height,
                                                      std::size_t width) const {
  std::vector<std::string> v;
  if (crop < 1) v.push_back("preprocess.crop must be >= 1");
  else if (static_cast<std::size_t>(crop) > height || static_cast<std::size_t>(crop) > width) {
    v.push_back("preprocess.crop " + std::to_string(crop) + " exceeds image " +
                std::to_string(height) + "x" + std::to_string(width));
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) v.push_back("preprocess.flip_prob must lie in [0, 1]");
  if (mean.size() != channels) v.push_back("preprocess.mean needs " + std::to_string(channels) + " values");
  if (std.size() != channels) v.push_back("preprocess.std needs " + std::to_string(channels) + " values");
  for (double s : std) {
    if (!(s > 0.0)) {
      v.push_back("preprocess.std values must be > 0");
      break;
    }
  }
  return v;
}

template <typename T>
void preprocess_into(std::span<const std::uint8_t> raw, std::size_t channels,
                     std::size_t height, std::size_t width,
                     const PreprocessParams& p, Rng& rng, T* out) {
  check_params(p, channels, height, width);
  if (raw.size() != channels * height * width) {
    throw ShapeError("preprocess: image has " + std::to_string(raw.size()) +
                     " bytes, expected " + std::to_string(channels * height * width));
  }
  const auto top = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(height) - p.crop));
  const auto left = static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(width) - p.crop));
  const bool flip = rng.bernoulli(p.flip_prob);
  normalise(raw, channels, height, width, p, top, left, flip, out);
}

template <typename T>
Tensor<T> preprocess(const RawImage& image, const PreprocessParams& p, Rng& rng) {
  check_params(p, image.channels, image.height, image.width);
  const auto crop = static_cast<std::size_t>(p.crop);
  Tensor<T> out({image.channels, crop, crop});
  preprocess_into(std::span<const std::uint8_t>(image.pixels), image.channels,
                  image.height, image.width, p, rng, out.ptr());
  return out;
}

template <typename T>
void preprocess_eval_into(std::span<const std::uint8_t> raw,
                          std::size_t channels, std::size_t height,
                          std::size_t width, const PreprocessParams& p, T* out) {
  check_params(p, channels, height, width);
  const auto crop = static_cast<std::size_t>(p.crop);
  normalise(raw, channels, height, width, p, (height - crop) / 2,
            (width - crop) / 2, false, out);
}

template <typename T>
Tensor<T> preprocess_eval(const RawImage& image, const PreprocessParams& p) {
  check_params(p, image.channels, image.height, image.width);
  const auto crop = static_cast<std::size_t>(p.crop);
  Tensor<T> out({image.channels, crop, crop});
  preprocess_eval_into(std::span<const std::uint8_t>(image.pixels), image.channels,
                       image.height, image.width, p, out.ptr());
  return out;
}

std::string_view to_string(OccluderKind kind) {
  switch (kind) {
    case OccluderKind::none: return "none";
    case OccluderKind::hide_seek: return "hide_seek";
    case OccluderKind::cutout: return "cutout";
    case OccluderKind::saliency: return "saliency";
  }
  return "none";
}

OccluderKind parse_occluder_kind(std::string_view text) {
  if (text == "none") return OccluderKind::none;
  if (text == "hide_seek") return OccluderKind::hide_seek;
  if (text == "cutout") return OccluderKind::cutout;
  if (text == "saliency") return OccluderKind::saliency;
  throw DomainError("unknown occluder '" + std::string(text) +
                    "' (expected none, hide_seek, cutout or saliency)");
}

template <typename T>
Occluder<T> Occluder<T>::hide_seek(HideSeekParams p) {
  Occluder o;
  o.kind_ = OccluderKind::hide_seek;
  p.p_keep_image = 0.0;
  o.hide_seek_ = p;
  return o;
}

template <typename T>
Occluder<T> Occluder<T>::cutout(CutoutParams p) {
  Occluder o;
  o.kind_ = OccluderKind::cutout;
  o.cutout_ = p;
  return o;
}

template <typename T>
Occluder<T> Occluder<T>::saliency(SaliencyOccluderParams p, Model<T>& model) {
  Occluder o;
  o.kind_ = OccluderKind::saliency;
  o.saliency_ = std::move(p);
  o.model_ = &model;
  return o;
}

template <typename T>
Mask Occluder<T>::mask_for(const T* image, std::size_t channels,
                           std::size_t height, std::size_t width, int label,
                           Rng& rng) const {
  switch (kind_) {
    case OccluderKind::none:
      return Mask(height, width);
    case OccluderKind::hide_seek:
      return hide_and_seek_mask(hide_seek_, height, width, rng);
    case OccluderKind::cutout:
      return cutout_mask(cutout_, height, width, rng);
    case OccluderKind::saliency: {
      Tensor<T> img({channels, height, width},
                    std::vector<T>(image, image + channels * height * width));
      return saliency_occlusion_mask(*model_, img, label, saliency_, rng);
    }
  }
  return Mask(height, width);
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::plain: return "plain";
    case Strategy::nonjoint: return "nonjoint";
    case Strategy::joint: return "joint";
    case Strategy::batch_augment: return "batch_augment";
    case Strategy::dataset_augment: return "dataset_augment";
  }
  return "plain";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "plain") return Strategy::plain;
  if (text == "nonjoint") return Strategy::nonjoint;
  if (text == "joint") return Strategy::joint;
  if (text == "batch_augment") return Strategy::batch_augment;
  if (text == "dataset_augment") return Strategy::dataset_augment;
  throw DomainError("unknown strategy '" + std::string(text) +
                    "' (expected plain, nonjoint, joint, batch_augment or dataset_augment)");
}

std::vector<std::string> BatchPlan::violations() const {
  std::vector<std::string> v;
  if (!(p_keep_image >= 0.0 && p_keep_image <= 1.0)) v.push_back("plan.p_keep_image must lie in [0, 1]");
  if (copies < 1) v.push_back("plan.copies must be >= 1");
  switch (strategy) {
    case Strategy::plain:
      if (occluder != OccluderKind::none) v.push_back("plan: strategy plain requires occluder none");
      if (copies != 1) v.push_back("plan: strategy plain requires copies = 1");
      break;
    case Strategy::nonjoint:
      if (copies != 1) v.push_back("plan: strategy nonjoint requires copies = 1");
      break;
    case Strategy::joint:
      if (copies != 2) v.push_back("plan: strategy joint requires copies = 2");
      break;
    case Strategy::batch_augment:
    case Strategy::dataset_augment:
      break;
  }
  return v;
}

template <typename T>
Batch<T> assemble_plain(const LabeledDataset& ds,
                        std::span<const std::size_t> indices,
                        const PreprocessParams& p, Rng& rng) {
  return assemble_nonjoint(ds, indices, p, Occluder<T>::none(), 1.0, rng);
}

template <typename T>
Batch<T> assemble_nonjoint(const LabeledDataset& ds,
                           std::span<const std::size_t> indices,
                           const PreprocessParams& p, const Occluder<T>& occluder,
                           double p_keep_image, Rng& rng) {
  return assemble_batch_augment(ds, indices, p, occluder, 1, p_keep_image, rng);
}

template <typename T>
Batch<T> assemble_joint(const Batch<T>& batch, const Occluder<T>& occluder,
                        Rng& rng) {
  const auto& s = batch.images.shape();
  if (s.size() != 4) throw ShapeError("assemble_joint: expected NCHW batch");
  const std::size_t n = s[0];
  const std::size_t per = s[1] * s[2] * s[3];
  Batch<T> out;
  out.images = Tensor<T>({2 * n, s[1], s[2], s[3]});
  std::memcpy(out.images.ptr(), batch.images.ptr(), n * per * sizeof(T));
  std::memcpy(out.images.ptr() + n * per, batch.images.ptr(), n * per * sizeof(T));
  out.labels = batch.labels;
  out.labels.insert(out.labels.end(), batch.labels.begin(), batch.labels.end());
  out.source = batch.source;
  out.source.insert(out.source.end(), batch.source.begin(), batch.source.end());
  out.occluded = batch.occluded;
  out.masks = batch.masks;
  for (std::size_t i = 0; i < n; ++i) maybe_occlude(out, n + i, occluder, 0.0, rng);
  return out;
}

template <typename T>
Batch<T> assemble_batch_augment(const LabeledDataset& ds,
                                std::span<const std::size_t> indices,
                                const PreprocessParams& p,
                                const Occluder<T>& occluder, int copies,
                                double p_keep_image, Rng& rng) {
  if (copies < 1) throw DomainError("batch_augment: copies must be >= 1");
  if (!(p_keep_image >= 0.0 && p_keep_image <= 1.0)) {
    throw DomainError("p_keep_image must lie in [0, 1]");
  }
  const auto m = static_cast<std::size_t>(copies);
  Batch<T> b = empty_batch<T>(ds, indices.size() * m, p);
  const std::size_t per = sample_size(b);
  std::size_t n = 0;
  for (std::size_t idx : indices) {
    for (std::size_t k = 0; k < m; ++k, ++n) {
      preprocess_into(ds.pixels(idx), ds.channels(), ds.height(), ds.width(), p,
                      rng, b.images.ptr() + n * per);
      b.labels.push_back(ds.label(idx));
      b.source.push_back(idx);
      maybe_occlude(b, n, occluder, p_keep_image, rng);
    }
  }
  return b;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count,
                                                    std::size_t batch_size,
                                                    Rng& rng) {
  if (count == 0) throw DomainError("epoch: empty dataset");
  if (batch_size == 0) throw DomainError("epoch: batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<long>(i),
                     order.begin() + static_cast<long>(std::min(count, i + batch_size)));
  }
  return out;
}

std::vector<std::vector<std::size_t>> dataset_augment_batches(
    std::size_t count, std::size_t batch_size, int copies, Rng& rng) {
  if (copies < 1) throw DomainError("dataset_augment: copies must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (int pass = 0; pass < copies; ++pass) {
    auto part = epoch_batches(count, batch_size, rng);
    for (auto& b : part) out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::vector<std::size_t>> plan_epoch(const BatchPlan& plan,
                                                 std::size_t count,
                                                 std::size_t batch_size,
                                                 Rng& rng) {
  if (plan.strategy == Strategy::dataset_augment) {
    return dataset_augment_batches(count, batch_size, plan.copies, rng);
  }
  return epoch_batches(count, batch_size, rng);
}

template <typename T>
Batch<T> assemble(const BatchPlan& plan, const LabeledDataset& ds,
                  std::span<const std::size_t> indices,
                  const PreprocessParams& p, const Occluder<T>& occluder,
                  Rng& rng) {
  switch (plan.strategy) {
    case Strategy::plain:
      return assemble_plain<T>(ds, indices, p, rng);
    case Strategy::nonjoint:
    case Strategy::dataset_augment:
      return assemble_nonjoint(ds, indices, p, occluder, plan.p_keep_image, rng);
    case Strategy::joint:
      return assemble_joint(assemble_plain<T>(ds, indices, p, rng), occluder, rng);
    case Strategy::batch_augment:
      return assemble_batch_augment(ds, indices, p, occluder, plan.copies,
                                    plan.p_keep_image, rng);
  }
  throw DomainError("assemble: unknown strategy");
}

template <typename T>
Batch<T> assemble_eval(const LabeledDataset& ds,
                       std::span<const std::size_t> indices,
                       const PreprocessParams& p) {
  Batch<T> b = empty_batch<T>(ds, indices.size(), p);
  const std::size_t per = sample_size(b);
  const auto& s = b.images.shape();
  std::size_t n = 0;
  for (std::size_t idx : indices) {
    preprocess_eval_into(ds.pixels(idx), ds.channels(), ds.height(), ds.width(), p,
                         b.images.ptr() + n * per);
    b.labels.push_back(ds.label(idx));
    b.source.push_back(idx);
    b.occluded.push_back(0);
    b.masks.emplace_back(s[2], s[3]);
    ++n;
  }
  return b;
}

#define OCCAUG_INSTANTIATE_PIPELINE(T)                                              \
  template void preprocess_into(std::span<const std::uint8_t>, std::size_t,          \
                                std::size_t, std::size_t, const PreprocessParams&,   \
                                Rng&, T*);                                           \
  template Tensor<T> preprocess(const RawImage&, const PreprocessParams&, Rng&);     \
  template void preprocess_eval_into(std::span<const std::uint8_t>, std::size_t,     \
                                     std::size_t, std::size_t,                       \
                                     const PreprocessParams&, T*);                   \
  template Tensor<T> preprocess_eval(const RawImage&, const PreprocessParams&);      \
  template class Occluder<T>;                                                        \
  template Batch<T> assemble_plain(const LabeledDataset&,                            \
                                   std::span<const std::size_t>,                     \
                                   const PreprocessParams&, Rng&);                   \
  template Batch<T> assemble_nonjoint(const LabeledDataset&,                         \
                                      std::span<const std::size_t>,                  \
                                      const PreprocessParams&, const Occluder<T>&,   \
                                      double, Rng&);                                 \
  template Batch<T> assemble_joint(const Batch<T>&, const Occluder<T>&, Rng&);       \
  template Batch<T> assemble_batch_augment(const LabeledDataset&,                    \
                                           std::span<const std::size_t>,             \
                                           const PreprocessParams&,                  \
                                           const Occluder<T>&, int, double, Rng&);   \
  template Batch<T> assemble(const BatchPlan&, const LabeledDataset&,                \
                             std::span<const std::size_t>, const PreprocessParams&,  \
                             const Occluder<T>&, Rng&);                              \
  template Batch<T> assemble_eval(const LabeledDataset&,                             \
                                  std::span<const std::size_t>,                      \
                                  const PreprocessParams&);

OCCAUG_INSTANTIATE_PIPELINE(float)
OCCAUG_INSTANTIATE_PIPELINE(double)

}  // namespace occaug
