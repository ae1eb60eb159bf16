#pragma once

#include <cstddef>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

/// 2D -> 3D kernel inflation: (k_h, k_w, C_in, C_out) becomes
/// (t, k_h, k_w, C_in, C_out) with every temporal slice equal to w / t, so
/// the response on temporally constant input is unchanged.
template <class T>
Tensor<T> inflate_2d(const Tensor<T>& weights_2d, std::size_t t_extent) {
  if (t_extent == 0) throw ConfigError("inflate_2d: temporal extent must be >= 1");
  if (weights_2d.rank() != 4) {
    throw ShapeError("inflate_2d: expected (k_h, k_w, C_in, C_out), got " + shape_string(weights_2d.shape()));
  }
  Shape shape{t_extent};
  shape.insert(shape.end(), weights_2d.shape().begin(), weights_2d.shape().end());
  Tensor<T> out(shape);
  const std::size_t n = weights_2d.size();
  const T scale = T(static_cast<double>(t_extent));
  for (std::size_t t = 0; t < t_extent; ++t) {
    for (std::size_t i = 0; i < n; ++i) out[t * n + i] = t_extent == 1 ? weights_2d[i] : weights_2d[i] / scale;
  }
  return out;
}

/// Depth-wise variant: (C, k_h, k_w) becomes (C, t, k_h, k_w).
template <class T>
Tensor<T> inflate_depthwise_2d(const Tensor<T>& weights_2d, std::size_t t_extent) {
  if (t_extent == 0) throw ConfigError("inflate_depthwise_2d: temporal extent must be >= 1");
  if (weights_2d.rank() != 3) {
    throw ShapeError("inflate_depthwise_2d: expected (C, k_h, k_w), got " + shape_string(weights_2d.shape()));
  }
  const std::size_t c = weights_2d.extent(0), plane = weights_2d.extent(1) * weights_2d.extent(2);
  Tensor<T> out({c, t_extent, weights_2d.extent(1), weights_2d.extent(2)});
  const T scale = T(static_cast<double>(t_extent));
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < t_extent; ++t)
      for (std::size_t i = 0; i < plane; ++i) {
        const T w = weights_2d[ch * plane + i];
        out[(ch * t_extent + t) * plane + i] = t_extent == 1 ? w : w / scale;
      }
  return out;
}

}  // namespace dualformer
