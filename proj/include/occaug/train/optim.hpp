#pragma once

#include <span>
#include <string>
#include <vector>

#include "occaug/core/tensor.hpp"
#include "occaug/nn/model.hpp"

namespace occaug {

/// Step decay: lr(e) = lr0 * decay^floor(e / period) for 0 <= e < total_epochs.
struct Schedule {
  double lr0 = 0.1;
  double decay = 0.1;
  int period = 9;
  int total_epochs = 30;

  std::vector<std::string> violations() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

double lr_at_epoch(const Schedule& s, int epoch);

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;

  friend bool operator==(const SgdOptions&, const SgdOptions&) = default;
};

/// v <- momentum * v + g + weight_decay * p; p <- p - lr * v.
template <typename T>
void sgd_momentum_step(std::span<T> params, std::span<const T> grads,
                       std::span<T> velocity, double lr, const SgdOptions& o);

/// SGD with momentum over every parameter of a model. Velocities start at
/// zero and are indexed like Model::parameters().
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(Model<T>& model, SgdOptions options);

  const SgdOptions& options() const noexcept { return options_; }
  /// Applies one update from the gradients currently stored on the
  /// parameters. A parameter without a gradient counts as zero gradient.
  void step(double lr);

  std::vector<Tensor<T>>& velocities() noexcept { return velocity_; }
  const std::vector<Tensor<T>>& velocities() const noexcept { return velocity_; }

 private:
  Model<T>* model_;
  SgdOptions options_;
  std::vector<Tensor<T>> velocity_;
};

extern template class SgdMomentum<float>;
extern template class SgdMomentum<double>;

}  // namespace occaug
