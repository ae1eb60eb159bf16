#pragma once

// Slow, direct reference implementations. Nothing here calls the kernels in
// numerics/ or attention/; every loop is written out.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "dualformer/attention/window.hpp"
#include "dualformer/errors.hpp"
#include "dualformer/numerics/extent.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer::oracle {

/// Boolean visibility matrix: allowed(i, j) means query i may attend key j.
class AttentionMask {
 public:
  AttentionMask(std::size_t queries, std::size_t keys, bool fill = true)
      : queries_(queries), keys_(keys), allowed_(queries * keys, fill ? 1 : 0) {}

  std::size_t queries() const { return queries_; }
  std::size_t keys() const { return keys_; }
  bool allowed(std::size_t i, std::size_t j) const { return allowed_[i * keys_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { allowed_[i * keys_ + j] = v ? 1 : 0; }

  void validate() const {
    for (std::size_t i = 0; i < queries_; ++i) {
      bool any = false;
      for (std::size_t j = 0; j < keys_ && !any; ++j) any = allowed(i, j);
      if (!any) throw ConfigError("attention mask: query row " + std::to_string(i) + " has no visible key");
    }
  }

 private:
  std::size_t queries_, keys_;
  std::vector<unsigned char> allowed_;
};

/// Tokens in raster order over the map see exactly the tokens of their own window.
inline AttentionMask window_mask(const WindowGrid& grid) {
  const Extent3 map = grid.map_extent();
  const std::size_t m = map.volume();
  std::vector<std::size_t> owner(m);
  for (std::size_t t = 0; t < map.t; ++t)
    for (std::size_t h = 0; h < map.h; ++h)
      for (std::size_t w = 0; w < map.w; ++w) owner[(t * map.h + h) * map.w + w] = grid.window_of(t, h, w);
  AttentionMask mask(m, m, false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) mask.set(i, j, owner[i] == owner[j]);
  return mask;
}

namespace detail {

template <class Visible>
Tensor<double> attend(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v, Visible visible) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.extent(1) != k.extent(1) || k.extent(0) != v.extent(0)) {
    throw ShapeError("attention reference: incompatible q " + shape_string(q.shape()) + ", k " +
                     shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  const std::size_t nq = q.extent(0), nk = k.extent(0), d = q.extent(1), dv = v.extent(1);
  const double root = std::sqrt(static_cast<double>(d));
  Tensor<double> out({nq, dv});
  std::vector<double> score(nk);
  for (std::size_t i = 0; i < nq; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nk; ++j) {
      if (!visible(i, j)) continue;
      double dot = 0.0;
      for (std::size_t e = 0; e < d; ++e) dot += q[i * d + e] * k[j * d + e];
      score[j] = dot / root;
      if (score[j] > peak) peak = score[j];
    }
    double total = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      score[j] = visible(i, j) ? std::exp(score[j] - peak) : 0.0;
      total += score[j];
    }
    for (std::size_t j = 0; j < nk; ++j) {
      if (!visible(i, j)) continue;
      const double weight = score[j] / total;
      for (std::size_t e = 0; e < dv; ++e) out[i * dv + e] += weight * v[j * dv + e];
    }
  }
  return out;
}

}  // namespace detail

/// softmax(q k^T / sqrt(d)) v with no projections.
inline Tensor<double> full_attention_ref(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v) {
  return detail::attend(q, k, v, [](std::size_t, std::size_t) { return true; });
}

/// Attention with disallowed scores treated as -inf.
inline Tensor<double> masked_attention_ref(const Tensor<double>& q, const Tensor<double>& k, const Tensor<double>& v,
                                           const AttentionMask& mask) {
  mask.validate();
  if (mask.queries() != q.extent(0) || mask.keys() != k.extent(0)) {
    throw ShapeError("masked_attention_ref: mask " + std::to_string(mask.queries()) + "x" +
                     std::to_string(mask.keys()) + " for " + std::to_string(q.extent(0)) + " queries and " +
                     std::to_string(k.extent(0)) + " keys");
  }
  return detail::attend(q, k, v, [&](std::size_t i, std::size_t j) { return mask.allowed(i, j); });
}

/// Mean over each non-overlapping region of a (T', H', W', D) map.
inline Tensor<double> adaptive_avg_pool3d_ref(const Tensor<double>& x, Extent3 target) {
  if (x.rank() != 4) throw ShapeError("adaptive_avg_pool3d_ref: expected (T,H,W,D), got " + shape_string(x.shape()));
  const Extent3 map{x.extent(0), x.extent(1), x.extent(2)};
  if (!target.divides(map)) {
    throw ShapeError("adaptive_avg_pool3d_ref: target " + target.str() + " does not divide " + map.str());
  }
  const std::size_t d = x.extent(3);
  const Extent3 region = map / target;
  Tensor<double> out({target.t, target.h, target.w, d});
  for (std::size_t a = 0; a < target.t; ++a)
    for (std::size_t b = 0; b < target.h; ++b)
      for (std::size_t c = 0; c < target.w; ++c)
        for (std::size_t ch = 0; ch < d; ++ch) {
          double sum = 0.0;
          for (std::size_t t = a * region.t; t < (a + 1) * region.t; ++t)
            for (std::size_t h = b * region.h; h < (b + 1) * region.h; ++h)
              for (std::size_t w = c * region.w; w < (c + 1) * region.w; ++w)
                sum += x[((t * map.h + h) * map.w + w) * d + ch];
          out[((a * target.h + b) * target.w + c) * d + ch] = sum / static_cast<double>(region.volume());
        }
  return out;
}

/// Naive 2D cross-correlation, no padding. x: (H, W, C_in);
/// kernel: (k_h, k_w, C_in, C_out); stride (s_h, s_w).
inline Tensor<double> conv2d_ref(const Tensor<double>& x, const Tensor<double>& kernel, std::size_t stride_h,
                                 std::size_t stride_w) {
  if (x.rank() != 3 || kernel.rank() != 4 || kernel.extent(2) != x.extent(2)) {
    throw ShapeError("conv2d_ref: input " + shape_string(x.shape()) + " vs kernel " + shape_string(kernel.shape()));
  }
  const std::size_t hn = x.extent(0), wn = x.extent(1), cin = x.extent(2);
  const std::size_t kh = kernel.extent(0), kw = kernel.extent(1), cout = kernel.extent(3);
  if (stride_h == 0 || stride_w == 0 || hn < kh || wn < kw || (hn - kh) % stride_h != 0 || (wn - kw) % stride_w != 0) {
    throw ShapeError("conv2d_ref: kernel/stride do not tile input " + shape_string(x.shape()));
  }
  const std::size_t ho = (hn - kh) / stride_h + 1, wo = (wn - kw) / stride_w + 1;
  Tensor<double> out({ho, wo, cout});
  for (std::size_t oh = 0; oh < ho; ++oh)
    for (std::size_t ow = 0; ow < wo; ++ow)
      for (std::size_t co = 0; co < cout; ++co) {
        double sum = 0.0;
        for (std::size_t i = 0; i < kh; ++i)
          for (std::size_t j = 0; j < kw; ++j)
            for (std::size_t ci = 0; ci < cin; ++ci)
              sum += x[((oh * stride_h + i) * wn + ow * stride_w + j) * cin + ci] *
                     kernel[((i * kw + j) * cin + ci) * cout + co];
        out[(oh * wo + ow) * cout + co] = sum;
      }
  return out;
}

}  // namespace dualformer::oracle
