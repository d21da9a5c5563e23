#include "occaug/nn/arch.hpp"

#include <algorithm>

#include "occaug/core/error.hpp"

namespace occaug {
namespace {

class LayerBuilder {
 public:
  explicit LayerBuilder(InputSize in)
      : c_(in.channels), h_(in.height), w_(in.width) {}

  void conv(std::string name, std::size_t out) {
    LayerDesc d{LayerKind::conv, std::move(name), c_, out, 3, 1, 1};
    c_ = out;
    push(std::move(d));
  }
  void bn(std::string name) {
    push(LayerDesc{LayerKind::batch_norm, std::move(name), c_, c_});
  }
  void relu(std::string name) {
    push(LayerDesc{LayerKind::relu, std::move(name)});
  }
  void pool(std::string name) {
    if (h_ < 2 || w_ < 2) {
      throw ShapeError("architecture: input too small for pool '" + name +
                       "' (feature map " + std::to_string(h_) + "x" +
                       std::to_string(w_) + ")");
    }
    h_ = (h_ - 2) / 2 + 1;
    w_ = (w_ - 2) / 2 + 1;
    push(LayerDesc{LayerKind::max_pool, std::move(name), 0, 0, 2, 2, 0});
  }
  void skip_save(std::string name) {
    push(LayerDesc{LayerKind::skip_save, std::move(name)});
  }
  void skip_join(std::string name, std::string source) {
    LayerDesc d{LayerKind::skip_join, std::move(name)};
    d.source = std::move(source);
    push(std::move(d));
  }
  void flatten_fc(std::size_t classes) {
    const std::size_t features = c_ * h_ * w_;
    push(LayerDesc{LayerKind::flatten, "flatten"});
    c_ = features;
    h_ = w_ = 1;
    push(LayerDesc{LayerKind::linear, "fc", features, classes});
    layers_.back().out_channels = classes;
  }

  void gap_fc(std::size_t classes) {
    h_ = w_ = 1;
    push(LayerDesc{LayerKind::global_avg_pool, "gap"});
    push(LayerDesc{LayerKind::linear, "fc", c_, classes});
    layers_.back().out_channels = classes;
  }

  std::vector<LayerDesc> take() { return std::move(layers_); }

 private:
  void push(LayerDesc d) {
    d.out_channels = c_;
    d.out_height = h_;
    d.out_width = w_;
    layers_.push_back(std::move(d));
  }

  std::size_t c_, h_, w_;
  std::vector<LayerDesc> layers_;
};

}  // namespace

std::string_view to_string(ArchName name) {
  return name == ArchName::mini_plain ? "mini_plain" : "mini_skip";
}

ArchName parse_arch_name(std::string_view text) {
  if (text == "mini_plain") return ArchName::mini_plain;
  if (text == "mini_skip") return ArchName::mini_skip;
  throw DomainError("unknown architecture '" + std::string(text) +
                    "' (expected mini_plain or mini_skip)");
}

ArchSpec ArchSpec::make(ArchName name, InputSize input,
                        std::size_t num_classes, std::size_t width) {
  if (num_classes < 1) throw DomainError("architecture: num_classes must be >= 1");
  if (width < 1) throw DomainError("architecture: width must be >= 1");
  if (input.channels < 1 || input.height < 1 || input.width < 1) {
    throw ShapeError("architecture: input size must be positive");
  }
  LayerBuilder b(input);
  if (name == ArchName::mini_plain) {
    std::size_t w = width;
    for (int i = 1; i <= 3; ++i) {
      const auto n = std::to_string(i);
      b.conv("conv" + n, w);
      b.relu("relu" + n);
      b.pool("pool" + n);
      w *= 2;
    }
    b.flatten_fc(num_classes);
  } else {
    b.conv("stem.conv", width);
    b.bn("stem.bn");
    b.relu("stem.relu");
    b.pool("stem.pool");
    for (int s = 1; s <= 3; ++s) {
      const std::string stage = "stage" + std::to_string(s);
      if (s > 1) b.pool(stage + ".pool");
      b.skip_save(stage + ".skip");
      b.conv(stage + ".conv1", width);
      b.bn(stage + ".bn1");
      b.relu(stage + ".relu1");
      b.conv(stage + ".conv2", width);
      b.bn(stage + ".bn2");
      b.skip_join(stage + ".join", stage + ".skip");
      b.relu(stage + ".relu2");
    }
    b.gap_fc(num_classes);
  }
  return ArchSpec{name, input, num_classes, width, b.take()};
}

const LayerDesc* ArchSpec::find(std::string_view layer) const {
  for (const auto& l : layers) {
    if (l.name == layer) return &l;
  }
  return nullptr;
}

std::vector<std::string> ArchSpec::hookable_layers() const {
  std::vector<std::string> names{"input"};
  for (const auto& l : layers) names.push_back(l.name);
  return names;
}

std::size_t ArchSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::conv:
        n += l.out * l.in * static_cast<std::size_t>(l.kernel * l.kernel) + l.out;
        break;
      case LayerKind::batch_norm: n += 2 * l.in; break;
      case LayerKind::linear: n += l.out * l.in + l.out; break;
      default: break;
    }
  }
  return n;
}

std::string_view to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::dropout: return "dropout";
    case RegularizerKind::spatial_dropout: return "spatial_dropout";
    case RegularizerKind::drop_block: return "drop_block";
  }
  return "none";
}

RegularizerKind parse_regularizer_kind(std::string_view text) {
  if (text == "none") return RegularizerKind::none;
  if (text == "dropout") return RegularizerKind::dropout;
  if (text == "spatial_dropout") return RegularizerKind::spatial_dropout;
  if (text == "drop_block") return RegularizerKind::drop_block;
  throw DomainError("unknown regularizer '" + std::string(text) + "'");
}

std::vector<std::string> RegularizerSpec::default_placement(
    ArchName arch, RegularizerKind kind) {
  if (kind == RegularizerKind::none) return {};
  if (arch == ArchName::mini_plain) return {"conv2", "conv3"};
  std::vector<std::string> out{"stage2.conv1", "stage2.conv2", "stage3.conv1",
                               "stage3.conv2"};
  if (kind == RegularizerKind::drop_block) {
    out.push_back("stage2.skip");
    out.push_back("stage3.skip");
  }
  return out;
}

}  // namespace occaug
