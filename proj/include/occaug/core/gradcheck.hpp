#pragma once

#include <functional>
#include <span>
#include <vector>

namespace occaug {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient estimate,
/// (f(p + eps e_i) - f(p - eps e_i)) / (2 eps) for every coordinate i.
std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> params,
                                               double eps);

/// ||a - b|| / max(||a||, ||b||), or 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace occaug
