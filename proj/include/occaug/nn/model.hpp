#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "occaug/core/graph.hpp"
#include "occaug/core/rng.hpp"
#include "occaug/core/tensor.hpp"
#include "occaug/nn/arch.hpp"

namespace occaug {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct NamedBatchNorm {
  std::string name;
  BatchNormState<T>* state;
};

struct ForwardOptions {
  /// Layers whose outputs are reported (and retained for gradients).
  std::vector<std::string> hooks;
  /// Train-mode batch norm folds batch statistics into the running ones.
  bool update_batch_norm = true;
  /// Train-mode stochastic regularizers are applied.
  bool regularize = true;
};

template <typename T>
struct ForwardResult {
  Var<T> logits;
  std::map<std::string, Var<T>> hooked;
};

/// A network built from an ArchSpec plus a regularizer, with deterministic
/// parameter initialisation.
template <typename T>
class Model {
 public:
  Model(ArchSpec arch, RegularizerSpec regularizer, std::uint64_t seed);

  const ArchSpec& arch() const noexcept { return arch_; }
  const RegularizerSpec& regularizer() const noexcept { return reg_; }

  void train() noexcept { training_ = true; }
  void eval() noexcept { training_ = false; }
  bool is_training() const noexcept { return training_; }

  ForwardResult<T> forward(Graph<T>& graph, Var<T> input,
                           const ForwardOptions& options = {});
  /// Logits without gradient tracking, in the current mode.
  Tensor<T> predict(const Tensor<T>& batch);

  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedBatchNorm<T>> batch_norms();
  std::size_t parameter_count() const;
  void zero_grad();

  /// Stream that draws regularizer masks.
  Rng& rng() noexcept { return rng_; }

 private:
  struct LayerParams {
    int weight = -1;  // index into params_
    int bias = -1;
    int norm = -1;    // index into norms_
  };

  ArchSpec arch_;
  RegularizerSpec reg_;
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::pair<std::string, BatchNormState<T>>> norms_;
  std::vector<LayerParams> layer_params_;
  Rng rng_;
  bool training_ = true;
};

template <typename T>
Model<T> build_model(const ArchSpec& arch, const RegularizerSpec& regularizer,
                     std::uint64_t seed) {
  return Model<T>(arch, regularizer, seed);
}

/// Forward pass that snapshots hooked activations and, after backward(),
/// their gradients. Owns the graph it builds.
template <typename T>
class HookedForward {
 public:
  HookedForward(Model<T>& model, const Tensor<T>& batch, ForwardOptions options,
                bool track_parameters = true);

  const Tensor<T>& logits() const { return result_.logits.value(); }
  /// Copy of the hooked layer's output.
  Tensor<T> activation(const std::string& layer) const;
  /// Copy of the loss gradient at the hooked layer's output. Throws
  /// StateError before backward().
  Tensor<T> gradient(const std::string& layer) const;

  /// Backward from the mean cross-entropy against `targets`; returns the loss.
  double backward(const Tensor<T>& targets);

 private:
  Var<T> lookup(const std::string& layer) const;

  std::unique_ptr<Graph<T>> graph_;
  ForwardResult<T> result_;
};

template <typename T>
HookedForward<T> forward_with_hooks(Model<T>& model, const Tensor<T>& batch,
                                    std::vector<std::string> hook_layers) {
  ForwardOptions options;
  options.hooks = std::move(hook_layers);
  return HookedForward<T>(model, batch, std::move(options));
}

extern template class Model<float>;
extern template class Model<double>;
extern template class HookedForward<float>;
extern template class HookedForward<double>;

}  // namespace occaug
