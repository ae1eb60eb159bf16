#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

inline constexpr double kFiniteDiffEps = 1e-5;

/// Central difference of f at coordinate `index` of x.
template <class F>
double finite_diff_at(F&& f, Tensor<double> x, std::size_t index, double eps = kFiniteDiffEps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff: eps must be positive");
  const double orig = x[index];
  x[index] = orig + eps;
  const double up = f(static_cast<const Tensor<double>&>(x));
  x[index] = orig - eps;
  const double down = f(static_cast<const Tensor<double>&>(x));
  if (!std::isfinite(up) || !std::isfinite(down)) {
    throw NumericError("finite_diff: non-finite function value at coordinate " +
                       std::to_string(index));
  }
  return (up - down) / (2.0 * eps);
}

/// Full central-difference gradient of a scalar function of a tensor.
template <class F>
Tensor<double> finite_diff_grad(F&& f, const Tensor<double>& x, double eps = kFiniteDiffEps) {
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] = finite_diff_at(f, probe, i, eps);
  return grad;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// derivative is zero from reporting spurious relative blow-ups.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace dualformer
