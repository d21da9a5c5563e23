#include "occaug/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "occaug/core/error.hpp"

namespace occaug {

std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> params,
                                               double eps) {
  if (!(eps > 0.0)) throw DomainError("finite difference eps must be > 0");
  std::vector<double> point(params.begin(), params.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double up = f(point);
    point[i] = saved - eps;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace occaug
