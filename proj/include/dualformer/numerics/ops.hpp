#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/exec.hpp"
#include "dualformer/numerics/extent.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

namespace detail {

inline void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(shape));
  }
}

// c[rows x n] += a[rows x k] * b[k x n]; each output accumulates in ascending k.
template <class T>
void gemm_accumulate(const T* a, const T* b, T* c, std::size_t rows, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace detail

/// Plain matrix product of rank-2 tensors.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, const ExecContext& ctx = {}) {
  detail::require_rank(a.shape(), 2, "matmul lhs");
  detail::require_rank(b.shape(), 2, "matmul rhs");
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  detail::gemm_accumulate(a.data(), b.data(), c.data(), m, k, n);
  ctx.count_macs(static_cast<std::uint64_t>(m) * k * n);
  return c;
}

/// Row-wise softmax over a contiguous row in place.
template <class T>
void softmax_inplace(T* row, std::size_t m) {
  using std::exp;
  T peak = row[0];
  for (std::size_t j = 1; j < m; ++j) {
    if (row[j] > peak) peak = row[j];
  }
  T sum{};
  for (std::size_t j = 0; j < m; ++j) {
    row[j] = exp(row[j] - peak);
    sum += row[j];
  }
  for (std::size_t j = 0; j < m; ++j) row[j] /= sum;
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x, const ExecContext& ctx = {}) {
  detail::require_rank(x.shape(), 2, "softmax_rows");
  Tensor<T> y = x;
  const std::size_t n = x.extent(0), m = x.extent(1);
  for (std::size_t i = 0; i < n; ++i) softmax_inplace(y.data() + i * m, m);
  ctx.count_elementwise(y.size());
  return y;
}

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last axis with population variance, then applies
/// `gain * xhat + shift`.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     double eps = kLayerNormEps, const ExecContext& ctx = {}) {
  using std::sqrt;
  const std::size_t d = x.shape().back();
  if (gain.size() != d || shift.size() != d) {
    throw ShapeError("layer_norm: affine length " + std::to_string(gain.size()) + "/" +
                     std::to_string(shift.size()) + " does not match last extent of " +
                     shape_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  Tensor<T> y(x.shape());
  const std::size_t rows = x.size() / d;
  const T inv_d = T(1) / T(static_cast<double>(d));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * d;
    T* out = y.data() + r * d;
    T mean{};
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean *= inv_d;
    T var{};
    for (std::size_t j = 0; j < d; ++j) {
      const T c = in[j] - mean;
      var += c * c;
    }
    var *= inv_d;
    const T inv_std = T(1) / sqrt(var + T(eps));
    for (std::size_t j = 0; j < d; ++j) out[j] = gain[j] * ((in[j] - mean) * inv_std) + shift[j];
  }
  ctx.count_elementwise(y.size());
  return y;
}

/// Exact GELU, x * Phi(x).
template <class T>
Tensor<T> gelu(Tensor<T> x, const ExecContext& ctx = {}) {
  using std::erf;
  const T inv_sqrt2 = T(1.0 / std::numbers::sqrt2);
  for (T& v : x.values()) v = T(0.5) * v * (T(1) + erf(v * inv_sqrt2));
  ctx.count_elementwise(x.size());
  return x;
}

/// Affine map over the last axis: x[..., Din] * weight[Din, Dout] (+ bias).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias = nullptr,
                 const ExecContext& ctx = {}) {
  detail::require_rank(weight.shape(), 2, "linear weight");
  const std::size_t din = weight.extent(0), dout = weight.extent(1);
  if (x.shape().back() != din) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  if (bias != nullptr && bias->size() != dout) {
    throw ShapeError("linear: bias length " + std::to_string(bias->size()) + " vs output width " +
                     std::to_string(dout));
  }
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  Tensor<T> y(out_shape);
  const std::size_t rows = x.size() / din;
  detail::gemm_accumulate(x.data(), weight.data(), y.data(), rows, din, dout);
  if (bias != nullptr) {
    for (std::size_t r = 0; r < rows; ++r) {
      T* row = y.data() + r * dout;
      for (std::size_t j = 0; j < dout; ++j) row[j] += (*bias)[j];
    }
  }
  ctx.count_macs(static_cast<std::uint64_t>(rows) * din * dout);
  return y;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ExecContext& ctx = {}) {
  return linear(x, weight, &bias, ctx);
}

/// Elementwise sum of equally shaped tensors (residual connections).
template <class T>
Tensor<T> add(Tensor<T> a, const Tensor<T>& b, const ExecContext& ctx = {}) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  ctx.count_elementwise(a.size());
  return a;
}

/// Depth-wise 3D kernel: one (k_t, k_h, k_w) filter per channel.
template <class T>
struct ConvKernel3D {
  Extent3 extent;
  Extent3 stride;
  std::size_t channels = 0;
  Tensor<T> weights;  // (C, k_t, k_h, k_w)
  std::optional<Tensor<T>> bias;

  static ConvKernel3D zeros(Extent3 extent, Extent3 stride, std::size_t channels, bool with_bias) {
    ConvKernel3D k{extent, stride, channels, Tensor<T>({channels, extent.t, extent.h, extent.w}),
                   std::nullopt};
    if (with_bias) k.bias = Tensor<T>({channels});
    return k;
  }

  void validate() const {
    if (extent.volume() == 0 || stride.volume() == 0) {
      throw ConfigError("conv kernel extents and strides must be >= 1");
    }
    if (weights.shape() != Shape{channels, extent.t, extent.h, extent.w}) {
      throw ShapeError("conv kernel weights " + shape_string(weights.shape()) +
                       " do not match extent " + extent.str() + " with " +
                       std::to_string(channels) + " channels");
    }
    if (bias && bias->size() != channels) throw ShapeError("conv kernel bias length mismatch");
  }
};

namespace detail {

inline std::size_t conv_out_extent(std::size_t dim, std::size_t k, std::size_t s, std::size_t p,
                                   const char* axis) {
  const std::size_t padded = dim + 2 * p;
  if (padded < k || (padded - k) % s != 0) {
    throw ShapeError(std::string("depthwise_conv3d: ") + axis + " extent " + std::to_string(dim) +
                     " with kernel " + std::to_string(k) + ", stride " + std::to_string(s) +
                     ", padding " + std::to_string(p) + " gives a non-integer output extent");
  }
  return (padded - k) / s + 1;
}

}  // namespace detail

/// Per-channel cross-correlation with zero padding over a (T, H, W, C) map.
template <class T>
Tensor<T> depthwise_conv3d(const Tensor<T>& x, const ConvKernel3D<T>& kernel, Extent3 padding = {0, 0, 0},
                           const ExecContext& ctx = {}) {
  detail::require_rank(x.shape(), 4, "depthwise_conv3d input");
  kernel.validate();
  const std::size_t tn = x.extent(0), hn = x.extent(1), wn = x.extent(2), c = x.extent(3);
  if (kernel.channels != c) {
    throw ShapeError("depthwise_conv3d: kernel has " + std::to_string(kernel.channels) +
                     " channels, input " + shape_string(x.shape()));
  }
  const Extent3 k = kernel.extent, s = kernel.stride;
  const std::size_t to = detail::conv_out_extent(tn, k.t, s.t, padding.t, "time");
  const std::size_t ho = detail::conv_out_extent(hn, k.h, s.h, padding.h, "height");
  const std::size_t wo = detail::conv_out_extent(wn, k.w, s.w, padding.w, "width");

  // Tap-major copy of the weights so the channel loop is contiguous.
  const std::size_t taps = k.volume();
  std::vector<T> tap_weights(taps * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t tap = 0; tap < taps; ++tap) tap_weights[tap * c + ch] = kernel.weights[ch * taps + tap];
  }

  Tensor<T> y({to, ho, wo, c});
  const auto in_index = [&](std::size_t ot, std::size_t kt, std::size_t stride, std::size_t pad,
                            std::size_t dim) -> std::ptrdiff_t {
    const auto pos = static_cast<std::ptrdiff_t>(ot * stride + kt) - static_cast<std::ptrdiff_t>(pad);
    return (pos < 0 || pos >= static_cast<std::ptrdiff_t>(dim)) ? -1 : pos;
  };

  parallel_for(to, ctx.threads, [&](std::size_t ot) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        T* acc = y.data() + ((ot * ho + oh) * wo + ow) * c;
        for (std::size_t kt = 0; kt < k.t; ++kt) {
          const auto it = in_index(ot, kt, s.t, padding.t, tn);
          if (it < 0) continue;
          for (std::size_t kh = 0; kh < k.h; ++kh) {
            const auto ih = in_index(oh, kh, s.h, padding.h, hn);
            if (ih < 0) continue;
            for (std::size_t kw = 0; kw < k.w; ++kw) {
              const auto iw = in_index(ow, kw, s.w, padding.w, wn);
              if (iw < 0) continue;
              const T* src = x.data() + ((static_cast<std::size_t>(it) * hn + static_cast<std::size_t>(ih)) * wn +
                                         static_cast<std::size_t>(iw)) * c;
              const T* wt = tap_weights.data() + ((kt * k.h + kh) * k.w + kw) * c;
              for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += wt[ch] * src[ch];
            }
          }
        }
        if (kernel.bias) {
          for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += (*kernel.bias)[ch];
        }
      }
    }
  });
  ctx.count_macs(static_cast<std::uint64_t>(y.size()) * taps);
  return y;
}

/// Dense (channel-mixing) 3D convolution whose extent equals its stride:
/// every non-overlapping patch is projected by one linear map.
template <class T>
struct PatchConv3D {
  Extent3 extent;
  Tensor<T> weight;  // (k_t, k_h, k_w, C_in, C_out)
  Tensor<T> bias;    // (C_out)

  static PatchConv3D zeros(Extent3 extent, std::size_t cin, std::size_t cout) {
    return {extent, Tensor<T>({extent.t, extent.h, extent.w, cin, cout}), Tensor<T>({cout})};
  }
  std::size_t in_channels() const { return weight.extent(3); }
  std::size_t out_channels() const { return weight.extent(4); }
};

template <class T>
Tensor<T> patch_conv3d(const Tensor<T>& x, const PatchConv3D<T>& conv, const ExecContext& ctx = {}) {
  detail::require_rank(x.shape(), 4, "patch_conv3d input");
  detail::require_rank(conv.weight.shape(), 5, "patch_conv3d weight");
  const Extent3 k = conv.extent;
  const Extent3 map{x.extent(0), x.extent(1), x.extent(2)};
  const std::size_t cin = x.extent(3);
  if (cin != conv.in_channels()) {
    throw ShapeError("patch_conv3d: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(conv.weight.shape()));
  }
  const char* axes[] = {"time", "height", "width"};
  const std::size_t dims[] = {map.t, map.h, map.w};
  const std::size_t ks[] = {k.t, k.h, k.w};
  for (int a = 0; a < 3; ++a) {
    if (dims[a] % ks[a] != 0) {
      throw ShapeError(std::string("patch_conv3d: ") + axes[a] + " extent " + std::to_string(dims[a]) +
                       " is not divisible by patch extent " + std::to_string(ks[a]));
    }
  }
  const Extent3 out = map / k;
  const std::size_t patch = k.volume() * cin;

  // Gather patches in (k_t, k_h, k_w, C_in) order, matching the weight layout.
  Tensor<T> cols({out.volume(), patch});
  for (std::size_t ot = 0; ot < out.t; ++ot) {
    for (std::size_t oh = 0; oh < out.h; ++oh) {
      for (std::size_t ow = 0; ow < out.w; ++ow) {
        T* dst = cols.data() + ((ot * out.h + oh) * out.w + ow) * patch;
        for (std::size_t kt = 0; kt < k.t; ++kt) {
          for (std::size_t kh = 0; kh < k.h; ++kh) {
            const T* src = x.data() + (((ot * k.t + kt) * map.h + oh * k.h + kh) * map.w + ow * k.w) * cin;
            std::copy(src, src + k.w * cin, dst);
            dst += k.w * cin;
          }
        }
      }
    }
  }
  const Tensor<T> w2 = conv.weight.reshaped({patch, conv.out_channels()});
  return linear(cols, w2, &conv.bias, ctx).reshaped({out.t, out.h, out.w, conv.out_channels()});
}

}  // namespace dualformer
