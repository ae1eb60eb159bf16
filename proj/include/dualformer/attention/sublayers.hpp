#pragma once

#include <cstddef>
#include <string>

#include "dualformer/attention/multi_head.hpp"
#include "dualformer/attention/pyramid.hpp"
#include "dualformer/attention/window.hpp"
#include "dualformer/errors.hpp"
#include "dualformer/numerics/exec.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

namespace detail {

inline Extent3 token_map_of(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + ": expected (T,H,W,D), got " + shape_string(s));
  return {s[0], s[1], s[2]};
}

template <class T>
Tensor<T> as_rows(const Tensor<T>& x) {
  return x.reshaped({x.size() / x.shape().back(), x.shape().back()});
}

}  // namespace detail

/// y = x + MLP(LN2(x)), the second half of every attention sub-layer.
template <class T>
Tensor<T> mlp_residual(const Tensor<T>& x, const AttentionParams<T>& p, const ExecContext& ctx = {}) {
  auto s = ctx.scope("mlp", CostKind::mlp);
  Tensor<T> hidden = gelu(p.mlp_in(p.ln2(x, ctx), ctx), ctx);
  return add(x, p.mlp_out(hidden, ctx), ctx);
}

/// Windowed attention on an already-normalized map: partition, attend within
/// each window, reverse. Windows run in parallel when ctx.threads > 1.
template <class T>
Tensor<T> lw_attention_core(const Tensor<T>& normed, const WindowGrid& grid, const AttentionParams<T>& p,
                            const ExecContext& ctx = {}) {
  const std::size_t nw = grid.window_count(), per = grid.tokens_per_window(), d = normed.extent(3);
  const Tensor<T> windows = window_partition(normed, grid).reshaped({nw * per, d});
  Tensor<T> mixed({nw, per, d});
  parallel_for_counted(nw, ctx, [&](std::size_t wi, const ExecContext& local) {
    const Tensor<T> tokens = detail::row_block(windows, wi * per, per);
    const Tensor<T> y = multi_head_attention(tokens, tokens, p, local);
    std::copy(y.values().begin(), y.values().end(), mixed.data() + wi * per * d);
  });
  return window_reverse(mixed, grid);
}

/// Local window attention sub-layer:
///   X' = MSA(LN(X)) + X within each window, Y = MLP(LN(X')) + X'.
template <class T>
Tensor<T> lw_msa_sublayer(const Tensor<T>& x, const WindowGrid& grid, const AttentionParams<T>& p,
                          const ExecContext& ctx = {}) {
  const Extent3 map = detail::token_map_of(x.shape(), "lw_msa_sublayer");
  if (map != grid.map_extent()) {
    throw ShapeError("lw_msa_sublayer: map " + map.str() + " vs window grid over " + grid.map_extent().str());
  }
  p.validate();
  Tensor<T> normed;
  {
    auto s = ctx.scope("proj", CostKind::projection);
    normed = p.ln1(x, ctx);
  }
  Tensor<T> attended = lw_attention_core(normed, grid, p, ctx);
  Tensor<T> mid;
  {
    auto s = ctx.scope("proj", CostKind::projection);
    mid = add(x, attended, ctx);
  }
  return mlp_residual(mid, p, ctx);
}

/// Global pyramid attention sub-layer with externally supplied priors (S x D):
/// every token queries the priors, then the MLP half runs.
template <class T>
Tensor<T> gp_msa_with_priors(const Tensor<T>& x, const Tensor<T>& normed, const Tensor<T>& priors,
                             const AttentionParams<T>& p, const ExecContext& ctx = {}) {
  const Tensor<T> attended = multi_head_attention(detail::as_rows(normed), priors, p, ctx).reshaped(x.shape());
  Tensor<T> mid;
  {
    auto s = ctx.scope("proj", CostKind::projection);
    mid = add(x, attended, ctx);
  }
  return mlp_residual(mid, p, ctx);
}

/// Global pyramid attention sub-layer. Priors are pooled from LN(X), the same
/// tensor that feeds the query projection.
template <class T>
Tensor<T> gp_msa_sublayer(const Tensor<T>& x, const PyramidSpec& spec, const PyramidKernels<T>& kernels,
                          const AttentionParams<T>& p, const ExecContext& ctx = {}) {
  detail::token_map_of(x.shape(), "gp_msa_sublayer");
  p.validate();
  Tensor<T> normed;
  {
    auto s = ctx.scope("proj", CostKind::projection);
    normed = p.ln1(x, ctx);
  }
  GlobalPriors<T> priors;
  {
    auto s = ctx.scope("pyramid", CostKind::conv);
    priors = pyramid_downsample(normed, spec, kernels, ctx);
  }
  return gp_msa_with_priors(x, normed, priors.tokens, p, ctx);
}

inline constexpr Extent3 kPegExtent{3, 3, 3};

template <class T>
struct PegParams {
  ConvKernel3D<T> kernel;

  static PegParams zeros(std::size_t channels) {
    return {ConvKernel3D<T>::zeros(kPegExtent, {1, 1, 1}, channels, true)};
  }
};

/// Position encoding generator: depth-wise 3x3x3 conv (zero padded) plus
/// the input.
template <class T>
Tensor<T> peg(const Tensor<T>& x, const PegParams<T>& p, const ExecContext& ctx = {}) {
  detail::token_map_of(x.shape(), "peg");
  if (p.kernel.channels != x.extent(3)) {
    throw ShapeError("peg: kernel has " + std::to_string(p.kernel.channels) + " channels, input " +
                     shape_string(x.shape()));
  }
  auto s = ctx.scope("", CostKind::conv);
  const Tensor<T> conv = depthwise_conv3d(x, p.kernel, {1, 1, 1}, ctx);
  return add(conv, x, ctx);
}

}  // namespace dualformer
