#include "occaug/saliency/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "occaug/core/error.hpp"
#include "occaug/core/graph.hpp"
#include "occaug/core/resample.hpp"
#include "occaug/nn/regularizers.hpp"

namespace occaug {
namespace {

Shape per_sample(const Shape& s, const char* what) {
  if (s.size() == 3) return s;
  if (s.size() == 4 && s[0] == 1) return {s[1], s[2], s[3]};
  throw ShapeError(std::string(what) + ": expected [K,h,w] or [1,K,h,w], got " +
                   shape_to_string(s));
}

}  // namespace

template <typename T>
Tensor<double> saliency_from_hooks(const Tensor<T>& activation,
                                   const Tensor<T>& gradient) {
  const Shape a = per_sample(activation.shape(), "saliency activation");
  const Shape g = per_sample(gradient.shape(), "saliency gradient");
  if (a != g) {
    throw ShapeError("saliency: activation " + shape_to_string(a) +
                     " and gradient " + shape_to_string(g) + " differ");
  }
  const std::size_t k = a[0], hw = a[1] * a[2];
  Tensor<double> out({a[1], a[2]});
  for (std::size_t p = 0; p < hw; ++p) {
    double xs = 0.0, gs = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double x = activation[c * hw + p];
      const double d = gradient[c * hw + p];
      xs += x * x;
      gs += d * d;
    }
    out[p] = std::sqrt(gs) * std::sqrt(xs);
  }
  return out;
}

template <typename T>
SaliencyMap saliency_map(Model<T>& model, const Tensor<T>& image, int label,
                         const std::string& layer) {
  const ArchSpec& arch = model.arch();
  if (layer != "input") {
    const LayerDesc* l = arch.find(layer);
    if (l == nullptr) throw DomainError("saliency: unknown layer '" + layer + "'");
    if (l->kind == LayerKind::flatten || l->kind == LayerKind::linear ||
        l->kind == LayerKind::global_avg_pool) {
      throw DomainError("saliency: layer '" + layer + "' has no spatial extent");
    }
  }
  if (label < 0 || static_cast<std::size_t>(label) >= arch.num_classes) {
    throw DomainError("saliency: label " + std::to_string(label) +
                      " outside [0, " + std::to_string(arch.num_classes) + ")");
  }
  Tensor<T> batch = image.rank() == 3
                        ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                        : image;
  ForwardOptions options;
  options.hooks = {layer};
  options.update_batch_norm = false;
  options.regularize = false;
  HookedForward<T> pass(model, batch, std::move(options),
                        /*track_parameters=*/false);
  const int labels[1] = {label};
  pass.backward(label_smooth<T>(labels, arch.num_classes, 0.0));
  return {layer, saliency_from_hooks(pass.activation(layer), pass.gradient(layer))};
}

std::string default_saliency_layer(ArchName arch) {
  return arch == ArchName::mini_skip ? "stage2.relu2" : "relu2";
}

PatchPosition extract_max_patch(const Tensor<double>& map, int side, int stride) {
  if (map.rank() != 2) {
    throw ShapeError("extract_max_patch: expected [H,W] map, got " +
                     shape_to_string(map.shape()));
  }
  if (stride < 1) throw DomainError("extract_max_patch: stride must be >= 1");
  if (side < 1) throw DomainError("extract_max_patch: side must be >= 1");
  const std::size_t h = map.dim(0), w = map.dim(1);
  const auto s = static_cast<std::size_t>(side);
  if (s > h || s > w) {
    throw DomainError("extract_max_patch: side " + std::to_string(side) +
                      " exceeds map " + std::to_string(h) + "x" + std::to_string(w));
  }
  Graph<double> graph(false);
  Var<double> sums = conv2d(graph.input(map.reshaped({1, 1, h, w})),
                            graph.input(Tensor<double>({1, 1, s, s}, 1.0)),
                            graph.input(Tensor<double>({1}, 0.0)), stride, 0);
  const Tensor<double>& v = sums.value();
  const std::size_t oh = v.dim(2), ow = v.dim(3);
  std::size_t best = 0;
  for (std::size_t i = 1; i < oh * ow; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return {static_cast<int>(best / ow) * stride, static_cast<int>(best % ow) * stride};
}

PatchPlacement place_saliency_patch(const Tensor<double>& map_image,
                                    const SaliencyOccluderParams& p, Rng& rng) {
  if (p.jitter < 0) throw DomainError("saliency occluder: jitter must be >= 0");
  PatchPlacement out;
  out.peak = extract_max_patch(map_image, p.side, p.stride);
  out.dy = static_cast<int>(rng.uniform_int(-p.jitter, p.jitter));
  out.dx = static_cast<int>(rng.uniform_int(-p.jitter, p.jitter));
  const int max_top = static_cast<int>(map_image.dim(0)) - p.side;
  const int max_left = static_cast<int>(map_image.dim(1)) - p.side;
  out.placed.top = std::clamp(out.peak.top + out.dy, 0, max_top);
  out.placed.left = std::clamp(out.peak.left + out.dx, 0, max_left);
  return out;
}

template <typename T>
Mask saliency_occlusion_mask(Model<T>& model, const Tensor<T>& image, int label,
                             const SaliencyOccluderParams& p, Rng& rng) {
  const std::string layer =
      p.layer.empty() ? default_saliency_layer(model.arch().name) : p.layer;
  const SaliencyMap sal = saliency_map(model, image, label, layer);
  const std::size_t h = image.dim(image.rank() - 2);
  const std::size_t w = image.dim(image.rank() - 1);
  const PatchPlacement at =
      place_saliency_patch(bilinear_upsample(sal.values, h, w), p, rng);
  Mask mask(h, w);
  mask.occlude_rect(at.placed.top, at.placed.left, p.side, p.side);
  return mask;
}

RawImage heatmap_image(const Tensor<double>& map) {
  if (map.rank() != 2) {
    throw ShapeError("heatmap_image: expected [H,W] map, got " +
                     shape_to_string(map.shape()));
  }
  RawImage out(1, map.dim(0), map.dim(1));
  double peak = 0.0;
  for (double v : map.data()) peak = std::max(peak, v);
  if (peak <= 0.0) return out;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double v = std::clamp(map[i] / peak, 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

template Tensor<double> saliency_from_hooks(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> saliency_from_hooks(const Tensor<double>&, const Tensor<double>&);
template SaliencyMap saliency_map(Model<float>&, const Tensor<float>&, int, const std::string&);
template SaliencyMap saliency_map(Model<double>&, const Tensor<double>&, int, const std::string&);
template Mask saliency_occlusion_mask(Model<float>&, const Tensor<float>&, int,
                                      const SaliencyOccluderParams&, Rng&);
template Mask saliency_occlusion_mask(Model<double>&, const Tensor<double>&, int,
                                      const SaliencyOccluderParams&, Rng&);

}  // namespace occaug
