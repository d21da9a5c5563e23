#include "occaug/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "occaug/core/error.hpp"
#include "occaug/nn/regularizers.hpp"

namespace occaug {
namespace {

/// He-style fan-in uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <typename T>
Tensor<T> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = static_cast<T>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> filled(Shape shape, T value) {
  Tensor<T> t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

bool contains(const std::vector<std::string>& names, const std::string& n) {
  return std::find(names.begin(), names.end(), n) != names.end();
}

}  // namespace

template <typename T>
Model<T>::Model(ArchSpec arch, RegularizerSpec regularizer, std::uint64_t seed)
    : arch_(std::move(arch)), reg_(std::move(regularizer)), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  if (arch_.layers.empty()) throw DomainError("model: empty layer table");
  std::set<std::string> names;
  for (const auto& l : arch_.layers) {
    if (!names.insert(l.name).second) {
      throw DomainError("model: duplicate layer name '" + l.name + "'");
    }
  }
  if (reg_.kind != RegularizerKind::none) {
    if (!(reg_.p_keep > 0.0 && reg_.p_keep <= 1.0)) {
      throw DomainError("regularizer: p_keep must lie in (0, 1]");
    }
    for (const auto& p : reg_.placement) {
      const LayerDesc* l = arch_.find(p);
      if (l == nullptr) {
        throw DomainError("regularizer placement names unknown layer '" + p + "'");
      }
      if (reg_.kind != RegularizerKind::dropout &&
          (l->kind == LayerKind::linear || l->kind == LayerKind::flatten ||
           l->kind == LayerKind::global_avg_pool)) {
        throw DomainError("regularizer placement '" + p +
                          "' has no spatial extent");
      }
      if (reg_.kind == RegularizerKind::drop_block) {
        const auto side = std::min(l->out_height, l->out_width);
        if (reg_.block_size < 1 ||
            static_cast<std::size_t>(reg_.block_size) > side) {
          throw DomainError("drop_block: block_size " +
                            std::to_string(reg_.block_size) +
                            " exceeds feature-map side " + std::to_string(side) +
                            " at '" + p + "'");
        }
      }
    }
  }

  Rng init(seed);
  layer_params_.resize(arch_.layers.size());
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    auto& lp = layer_params_[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const auto k = static_cast<std::size_t>(l.kernel);
        const std::size_t fan_in = l.in * k * k;
        lp.weight = static_cast<int>(params_.size());
        params_.emplace_back(l.name + ".weight",
                             he_uniform<T>({l.out, l.in, k, k}, fan_in, init));
        lp.bias = static_cast<int>(params_.size());
        params_.emplace_back(l.name + ".bias", filled<T>({l.out}, T{0}));
        break;
      }
      case LayerKind::linear: {
        lp.weight = static_cast<int>(params_.size());
        params_.emplace_back(l.name + ".weight",
                             he_uniform<T>({l.out, l.in}, l.in, init));
        lp.bias = static_cast<int>(params_.size());
        params_.emplace_back(l.name + ".bias", filled<T>({l.out}, T{0}));
        break;
      }
      case LayerKind::batch_norm: {
        lp.weight = static_cast<int>(params_.size());
        params_.emplace_back(l.name + ".gamma", filled<T>({l.in}, T{1}));
        lp.bias = static_cast<int>(params_.size());
        params_.emplace_back(l.name + ".beta", filled<T>({l.in}, T{0}));
        lp.norm = static_cast<int>(norms_.size());
        norms_.emplace_back(l.name, BatchNormState<T>(l.in));
        break;
      }
      default:
        break;
    }
  }
}

template <typename T>
ForwardResult<T> Model<T>::forward(Graph<T>& graph, Var<T> input,
                                   const ForwardOptions& options) {
  const auto& in = input.shape();
  const auto& want = arch_.input;
  if (in.size() != 4) {
    throw ShapeError("model: expected NCHW input, got " + shape_to_string(in));
  }
  if (in[1] != want.channels) throw ShapeError("model: input dimension 'channels' is " + std::to_string(in[1]) + ", expected " + std::to_string(want.channels));
  if (in[2] != want.height) throw ShapeError("model: input dimension 'height' is " + std::to_string(in[2]) + ", expected " + std::to_string(want.height));
  if (in[3] != want.width) throw ShapeError("model: input dimension 'width' is " + std::to_string(in[3]) + ", expected " + std::to_string(want.width));
  for (const auto& h : options.hooks) {
    if (h != "input" && arch_.find(h) == nullptr) {
      throw DomainError("hook names unknown layer '" + h + "'");
    }
  }

  ForwardResult<T> result;
  auto hook = [&](const std::string& name, Var<T> v) {
    if (!contains(options.hooks, name)) return;
    graph.retain_grad(v);
    result.hooked[name] = v;
  };
  const bool regularize =
      training_ && options.regularize && reg_.kind != RegularizerKind::none;
  auto apply_reg = [&](Var<T> v) {
    switch (reg_.kind) {
      case RegularizerKind::dropout:
        return dropout(v, reg_.p_keep, rng_, true);
      case RegularizerKind::spatial_dropout:
        return spatial_dropout(v, reg_.p_keep, rng_, true);
      case RegularizerKind::drop_block:
        return drop_block(v, reg_.p_keep, reg_.block_size, rng_, true);
      case RegularizerKind::none:
        break;
    }
    return v;
  };

  BatchNormOptions bn_opts;
  bn_opts.mode = training_ ? BatchNormMode::train : BatchNormMode::eval;
  bn_opts.update_running = options.update_batch_norm;

  hook("input", input);
  Var<T> x = input;
  std::map<std::string, Var<T>> stash;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    const auto& lp = layer_params_[i];
    switch (l.kind) {
      case LayerKind::conv:
        x = conv2d(x, graph.parameter(params_[lp.weight].second),
                   graph.parameter(params_[lp.bias].second), l.stride,
                   l.padding);
        break;
      case LayerKind::batch_norm:
        x = batch_norm2d(x, graph.parameter(params_[lp.weight].second),
                         graph.parameter(params_[lp.bias].second),
                         norms_[lp.norm].second, bn_opts);
        break;
      case LayerKind::relu:
        x = relu(x);
        break;
      case LayerKind::max_pool:
        x = max_pool2d(x, l.kernel, l.stride);
        break;
      case LayerKind::global_avg_pool:
        x = global_avg_pool2d(x);
        break;
      case LayerKind::flatten:
        x = flatten(x);
        break;
      case LayerKind::linear:
        x = linear(x, graph.parameter(params_[lp.weight].second),
                   graph.parameter(params_[lp.bias].second));
        break;
      case LayerKind::skip_save: {
        Var<T> branch = x;
        if (regularize && contains(reg_.placement, l.name)) {
          branch = apply_reg(branch);
        }
        stash[l.name] = branch;
        hook(l.name, x);
        continue;
      }
      case LayerKind::skip_join:
        x = add(x, stash.at(l.source));
        break;
    }
    hook(l.name, x);
    if (regularize && contains(reg_.placement, l.name)) x = apply_reg(x);
  }
  result.logits = x;
  return result;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& batch) {
  Graph<T> graph(/*track_parameters=*/false);
  auto out = forward(graph, graph.input(batch));
  return out.logits.value();
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  out.reserve(params_.size());
  for (auto& [name, t] : params_) out.push_back({name, &t});
  return out;
}

template <typename T>
std::vector<NamedBatchNorm<T>> Model<T>::batch_norms() {
  std::vector<NamedBatchNorm<T>> out;
  for (auto& [name, s] : norms_) out.push_back({name, &s});
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.second.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.second.zero_grad();
}

// ---------------------------------------------------------------------------

template <typename T>
HookedForward<T>::HookedForward(Model<T>& model, const Tensor<T>& batch,
                                ForwardOptions options, bool track_parameters)
    : graph_(std::make_unique<Graph<T>>(track_parameters)) {
  result_ = model.forward(*graph_, graph_->input(batch), options);
}

template <typename T>
Var<T> HookedForward<T>::lookup(const std::string& layer) const {
  auto it = result_.hooked.find(layer);
  if (it == result_.hooked.end()) {
    throw DomainError("layer '" + layer + "' was not hooked");
  }
  return it->second;
}

template <typename T>
Tensor<T> HookedForward<T>::activation(const std::string& layer) const {
  return lookup(layer).value();
}

template <typename T>
Tensor<T> HookedForward<T>::gradient(const std::string& layer) const {
  const Var<T> v = lookup(layer);
  if (!graph_->backward_done()) {
    throw StateError("gradient hook '" + layer + "' read before backward");
  }
  return graph_->grad(v);
}

template <typename T>
double HookedForward<T>::backward(const Tensor<T>& targets) {
  Var<T> loss = softmax_cross_entropy(result_.logits, targets);
  graph_->backward(loss);
  return loss.value()[0];
}

template class Model<float>;
template class Model<double>;
template class HookedForward<float>;
template class HookedForward<double>;

}  // namespace occaug
