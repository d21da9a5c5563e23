#include "occaug/train/optim.hpp"

#include <cmath>

#include "occaug/core/error.hpp"

namespace occaug {

std::vector<std::string> Schedule::violations() const {
  std::vector<std::string> v;
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) v.push_back("train.lr0 must be > 0");
  if (!(decay > 0.0 && decay <= 1.0)) v.push_back("train.lr_decay must lie in (0, 1]");
  if (period < 1) v.push_back("train.lr_period must be >= 1");
  if (total_epochs < 1) v.push_back("train.epochs must be >= 1");
  return v;
}

double lr_at_epoch(const Schedule& s, int epoch) {
  if (epoch < 0 || epoch >= s.total_epochs) {
    throw DomainError("lr_at_epoch: epoch " + std::to_string(epoch) +
                      " outside [0, " + std::to_string(s.total_epochs) + ")");
  }
  if (s.period < 1) throw DomainError("lr_at_epoch: period must be >= 1");
  const int k = epoch / s.period;
  // Dividing by an integral 1 / decay gives 0.1 -> 0.01 -> 0.001 exactly as
  // written, where repeated multiplication by 0.1 would drift in the last bit.
  const double inv = 1.0 / s.decay;
  if (inv == std::round(inv)) return s.lr0 / std::pow(inv, k);
  return s.lr0 * std::pow(s.decay, k);
}

template <typename T>
void sgd_momentum_step(std::span<T> params, std::span<const T> grads,
                       std::span<T> velocity, double lr, const SgdOptions& o) {
  if (grads.size() != params.size()) {
    throw ShapeError("sgd: gradient has " + std::to_string(grads.size()) +
                     " values, parameter has " + std::to_string(params.size()));
  }
  if (velocity.size() != params.size()) {
    throw ShapeError("sgd: velocity has " + std::to_string(velocity.size()) +
                     " values, parameter has " + std::to_string(params.size()));
  }
  const T m = static_cast<T>(o.momentum);
  const T wd = static_cast<T>(o.weight_decay);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = m * velocity[i] + grads[i] + wd * params[i];
    params[i] -= step * velocity[i];
  }
}

template <typename T>
SgdMomentum<T>::SgdMomentum(Model<T>& model, SgdOptions options)
    : model_(&model), options_(options) {
  for (const auto& p : model.parameters()) {
    velocity_.emplace_back(p.tensor->shape(), T{0});
  }
}

template <typename T>
void SgdMomentum<T>::step(double lr) {
  auto params = model_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].tensor;
    if (!p.has_grad()) p.zero_grad();
    sgd_momentum_step(p.data(), p.grad(), velocity_[i].data(), lr, options_);
  }
}

template void sgd_momentum_step(std::span<float>, std::span<const float>,
                                std::span<float>, double, const SgdOptions&);
template void sgd_momentum_step(std::span<double>, std::span<const double>,
                                std::span<double>, double, const SgdOptions&);
template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace occaug
