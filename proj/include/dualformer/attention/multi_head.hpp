#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/exec.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

template <class T>
struct Linear {
  Tensor<T> weight;  // (D_in, D_out)
  Tensor<T> bias;    // (D_out)

  static Linear zeros(std::size_t din, std::size_t dout) { return {Tensor<T>({din, dout}), Tensor<T>({dout})}; }
  Tensor<T> operator()(const Tensor<T>& x, const ExecContext& ctx = {}) const { return linear(x, weight, &bias, ctx); }
};

template <class T>
struct Norm {
  Tensor<T> gain;
  Tensor<T> shift;

  static Norm identity(std::size_t d) { return {Tensor<T>({d}, T(1)), Tensor<T>({d})}; }
  Tensor<T> operator()(const Tensor<T>& x, const ExecContext& ctx = {}) const {
    return layer_norm(x, gain, shift, kLayerNormEps, ctx);
  }
};

inline constexpr std::size_t kMlpExpansion = 4;

/// Parameters of one attention sub-layer (MSA + MLP, both pre-norm).
template <class T>
struct AttentionParams {
  std::size_t heads = 1;
  Linear<T> q, k, v, out;
  Norm<T> ln1, ln2;
  Linear<T> mlp_in, mlp_out;

  /// Zero projections and MLP, identity norms.
  static AttentionParams zeros(std::size_t width, std::size_t heads) {
    const std::size_t hidden = kMlpExpansion * width;
    return {heads,
            Linear<T>::zeros(width, width),
            Linear<T>::zeros(width, width),
            Linear<T>::zeros(width, width),
            Linear<T>::zeros(width, width),
            Norm<T>::identity(width),
            Norm<T>::identity(width),
            Linear<T>::zeros(width, hidden),
            Linear<T>::zeros(hidden, width)};
  }

  std::size_t width() const { return q.weight.extent(0); }
  std::size_t head_dim() const { return width() / heads; }

  void validate() const {
    const std::size_t d = width();
    if (heads == 0 || d % heads != 0) {
      throw ConfigError("attention: width " + std::to_string(d) + " is not divisible by " +
                        std::to_string(heads) + " heads");
    }
    for (const Linear<T>* l : {&q, &k, &v, &out}) {
      if (l->weight.shape() != Shape{d, d} || l->bias.size() != d) {
        throw ShapeError("attention: projection weight " + shape_string(l->weight.shape()) + " for width " +
                         std::to_string(d));
      }
    }
    if (mlp_in.weight.shape() != Shape{d, kMlpExpansion * d} ||
        mlp_out.weight.shape() != Shape{kMlpExpansion * d, d}) {
      throw ShapeError("attention: MLP hidden width must be " + std::to_string(kMlpExpansion) + "x" +
                       std::to_string(d));
    }
  }
};

/// Test hook: sees each block of attention weights (rows x N_k) for a head,
/// starting at query row `first_row`.
template <class T>
using AttentionProbe = std::function<void(std::size_t head, std::size_t first_row, const Tensor<T>& weights)>;

inline constexpr std::size_t kQueryBlock = 256;

namespace detail {

template <class T>
Tensor<T> row_block(const Tensor<T>& x, std::size_t first, std::size_t count) {
  const std::size_t d = x.extent(1);
  Tensor<T> out({count, d});
  std::copy_n(x.data() + first * d, count * d, out.data());
  return out;
}

}  // namespace detail

/// Multi-head attention of N_q query rows over N_k key/value rows, with
/// learned projections and scaling 1/sqrt(head_dim). No mask.
///
/// Charges projections to `prefix.proj` and the score / weighted-sum products
/// to `prefix.attn`. Queries are processed in blocks; every output row is
/// computed independently, so the result does not depend on block size or
/// thread count.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& q_src, const Tensor<T>& kv_src, const AttentionParams<T>& p,
                               const ExecContext& ctx = {}, const AttentionProbe<T>* probe = nullptr) {
  p.validate();
  const std::size_t d = p.width();
  if (q_src.rank() != 2 || kv_src.rank() != 2 || q_src.extent(1) != d || kv_src.extent(1) != d) {
    throw ShapeError("multi_head_attention: inputs " + shape_string(q_src.shape()) + ", " +
                     shape_string(kv_src.shape()) + " for width " + std::to_string(d));
  }
  const std::size_t nq = q_src.extent(0), nk = kv_src.extent(0);
  const std::size_t heads = p.heads, hd = p.head_dim();
  const T scale = T(1.0 / std::sqrt(static_cast<double>(hd)));

  Tensor<T> keys, values;
  {
    auto s = ctx.scope("proj", CostKind::projection);
    keys = p.k(kv_src, ctx);
    values = p.v(kv_src, ctx);
  }

  Tensor<T> out({nq, d});
  const std::size_t blocks = (nq + kQueryBlock - 1) / kQueryBlock;
  parallel_for_counted(blocks, ctx, [&](std::size_t b, const ExecContext& local) {
    const std::size_t r0 = b * kQueryBlock, rows = std::min(kQueryBlock, nq - r0);
    Tensor<T> queries;
    {
      auto s = local.scope("proj", CostKind::projection);
      queries = p.q(detail::row_block(q_src, r0, rows), local);
    }
    Tensor<T> mixed({rows, d});
    {
      auto s = local.scope("attn", CostKind::attention);
      Tensor<T> weights({rows, nk});
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < rows; ++i) {
          const T* qi = queries.data() + i * d + off;
          T* wrow = weights.data() + i * nk;
          for (std::size_t j = 0; j < nk; ++j) {
            const T* kj = keys.data() + j * d + off;
            T dot{};
            for (std::size_t e = 0; e < hd; ++e) dot += qi[e] * kj[e];
            wrow[j] = dot * scale;
          }
          softmax_inplace(wrow, nk);
        }
        if (probe != nullptr && *probe) (*probe)(h, r0, weights);
        for (std::size_t i = 0; i < rows; ++i) {
          const T* wrow = weights.data() + i * nk;
          T* acc = mixed.data() + i * d + off;
          for (std::size_t j = 0; j < nk; ++j) {
            const T a = wrow[j];
            const T* vj = values.data() + j * d + off;
            for (std::size_t e = 0; e < hd; ++e) acc[e] += a * vj[e];
          }
        }
      }
      local.count_macs(2 * static_cast<std::uint64_t>(rows) * nk * d);
      local.count_elementwise(static_cast<std::uint64_t>(rows) * nk * heads);
    }
    auto s = local.scope("proj", CostKind::projection);
    const Tensor<T> projected = p.out(mixed, local);
    std::copy(projected.values().begin(), projected.values().end(), out.data() + r0 * d);
  });
  return out;
}

}  // namespace dualformer
