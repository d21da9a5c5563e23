#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "occaug/core/tensor.hpp"

namespace occaug {

enum class OpTag {
  parameter,
  input,
  conv2d,
  max_pool2d,
  global_avg_pool2d,
  linear,
  relu,
  batch_norm2d,
  add,
  mul,
  scale_by,
  sum,
  reshape,
  softmax_cross_entropy,
};

std::string_view op_name(OpTag tag);

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in execution order, so insertion
/// order is a topological order and backward is a single reverse sweep.
///
/// Parameters enter as leaves bound to caller-owned tensors; backward adds
/// their gradients into Tensor::mutable_grad(), so calling backward twice
/// without zeroing accumulates. Intermediate gradients live on the tape and
/// are readable after backward for nodes that required a gradient.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    OpTag op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Tensor<T>* bound = nullptr;
    BackwardFn backward;
  };

  /// When false, parameter leaves never require gradients. Used by passes
  /// that only need activation gradients (saliency) and must leave parameter
  /// gradients untouched.
  explicit Graph(bool track_parameters = true)
      : track_parameters_(track_parameters) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf bound to a caller-owned tensor. Requires a gradient when the tensor
  /// does and parameter tracking is on.
  Var<T> parameter(Tensor<T>& tensor);
  /// Constant leaf holding a copy of `value`.
  Var<T> input(Tensor<T> value, bool requires_grad = false);

  /// Marks a node as requiring a gradient so later nodes built on it join
  /// the backward pass. Must be called before dependent nodes are created.
  void retain_grad(Var<T> v);

  /// Runs the reverse sweep from a scalar node.
  void backward(Var<T> loss);
  bool backward_done() const noexcept { return backward_done_; }

  /// Gradient of the last backward with respect to node `v`.
  Tensor<T> grad(Var<T> v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  // Op-implementation interface.
  Var<T> push(OpTag op, std::vector<std::size_t> inputs, Tensor<T> value,
              BackwardFn backward);
  Node& mutable_node(std::size_t id) { return nodes_[id]; }
  /// Gradient buffer of node `id`, zero-initialised on first use.
  std::span<T> grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  std::vector<Node> nodes_;
  bool track_parameters_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

// ---------------------------------------------------------------------------
// Differentiable operations.

/// NCHW convolution: output[b,k] = bias[k] + sum_c input[b,c] * weight[k,c].
/// Output side is floor((H + 2*padding - kh) / stride) + 1.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride,
              int padding);

/// Max over k x k windows. Backward routes the gradient to the window's
/// argmax; ties go to the lowest linear index.
template <typename T>
Var<T> max_pool2d(Var<T> input, int k, int stride);

/// Mean over H and W: [B,C,H,W] -> [B,C].
template <typename T>
Var<T> global_avg_pool2d(Var<T> input);

/// input [B,D] x weight[O,D]^T + bias[O].
template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias);

/// max(0, x); the subgradient at 0 is 0.
template <typename T>
Var<T> relu(Var<T> input);

enum class BatchNormMode { train, eval };

/// Per-channel running statistics owned by a model.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}
};

struct BatchNormOptions {
  BatchNormMode mode = BatchNormMode::train;
  double momentum = 0.1;
  double eps = 1e-5;
  /// Train mode only: fold the batch statistics into the running ones.
  bool update_running = true;
};

/// Batch normalisation over (B, H, W) per channel. Train mode uses the biased
/// batch variance for normalisation and folds the unbiased one into the
/// running variance; eval mode reads the running statistics.
template <typename T>
Var<T> batch_norm2d(Var<T> input, Var<T> gamma, Var<T> beta,
                    BatchNormState<T>& state, const BatchNormOptions& options);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product; both sides may require gradients.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// Elementwise product with a constant factor tensor of the same shape.
template <typename T>
Var<T> scale_by(Var<T> input, const Tensor<T>& factor);

/// Sum of all elements as a scalar.
template <typename T>
Var<T> sum(Var<T> input);

template <typename T>
Var<T> reshape(Var<T> input, Shape shape);

/// [B, ...] -> [B, prod(...)].
template <typename T>
Var<T> flatten(Var<T> input);

/// Mean over the batch of -sum_k t_k log softmax(logits)_k. Each row of
/// `targets` must sum to 1 within 1e-6.
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, const Tensor<T>& targets);

/// Forward-only loss value for a logits tensor (same formula).
template <typename T>
double softmax_cross_entropy_value(const Tensor<T>& logits,
                                   const Tensor<T>& targets);

}  // namespace occaug
