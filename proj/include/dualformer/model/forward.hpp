#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dualformer/attention/sublayers.hpp"
#include "dualformer/attention/window.hpp"
#include "dualformer/errors.hpp"
#include "dualformer/model/config.hpp"
#include "dualformer/model/state.hpp"
#include "dualformer/numerics/exec.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

template <class T>
struct Logits {
  Tensor<T> values;  // (num_classes)
};

/// Non-overlapping (2,4,4)-style projection of RGB patches to C_1 channels.
template <class T>
Tensor<T> patch_embed(const Tensor<T>& clip, const PatchConv3D<T>& conv, const ExecContext& ctx = {}) {
  if (clip.rank() != 4 || clip.extent(3) != kInputChannels) {
    throw ShapeError("patch_embed: expected a (T,H,W,3) clip, got " + shape_string(clip.shape()));
  }
  auto s = ctx.scope("", CostKind::embed);
  return patch_conv3d(clip, conv, ctx);
}

/// Downsamples by the merge rate (r_t, 2, 2) and changes width C -> C'.
template <class T>
Tensor<T> patch_merge(const Tensor<T>& x, const PatchConv3D<T>& conv, const ExecContext& ctx = {}) {
  auto s = ctx.scope("", CostKind::conv);
  return patch_conv3d(x, conv, ctx);
}

/// LW-MSA, optional PEG, then GP-MSA. `ctx.prefix` names the block; the PEG
/// is charged to `peg_ctx`.
template <class T>
Tensor<T> dualformer_block(const Tensor<T>& x, const BlockState<T>& block, const PegParams<T>* peg_params,
                           const StageConfig& stage, const ExecContext& ctx = {},
                           const ExecContext* peg_ctx = nullptr) {
  if (x.rank() != 4) throw ShapeError("dualformer_block: expected (T,H,W,D), got " + shape_string(x.shape()));
  const Extent3 map{x.extent(0), x.extent(1), x.extent(2)};
  const WindowGrid grid(map, stage.window);
  Tensor<T> y = lw_msa_sublayer(x, grid, block.lw, ctx.nested("lw"));
  if (peg_params != nullptr) y = peg(y, *peg_params, peg_ctx != nullptr ? *peg_ctx : ctx.nested("peg"));
  return gp_msa_sublayer(y, stage.pyramid, block.pyramid, block.gp, ctx.nested("gp"));
}

namespace detail {

template <class T>
void require_finite(const Tensor<T>& x, const std::string& layer) {
  if (!all_finite(x)) throw NumericError("non-finite activation after " + layer);
}

}  // namespace detail

/// Mean over all space-time tokens of a (T', H', W', C) map.
template <class T>
Tensor<T> global_average_pool(const Tensor<T>& x, const ExecContext& ctx = {}) {
  const std::size_t c = x.shape().back(), m = x.size() / c;
  Tensor<T> out({1, c});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[j] += x[r * c + j];
  }
  const T inv = T(1.0 / static_cast<double>(m));
  for (std::size_t j = 0; j < c; ++j) out[j] *= inv;
  ctx.count_elementwise(x.size());
  return out;
}

/// Full network: embed -> stages (merge + blocks) -> GAP -> linear head.
/// When `stage_maps_out` is set, receives the token-map extent of each stage.
template <class T>
Logits<T> forward(const Tensor<T>& clip, const ModelConfig& cfg, const ModelState<T>& st, const ExecContext& ctx = {},
                  std::vector<Extent3>* stage_maps_out = nullptr) {
  validate(cfg);
  const Shape expected{cfg.input.t, cfg.input.h, cfg.input.w, kInputChannels};
  if (clip.shape() != expected) {
    throw ShapeError("forward: clip " + shape_string(clip.shape()) + " does not match configured input " +
                     shape_string(expected));
  }
  if (st.stages.size() != cfg.stages.size()) throw ConfigError("forward: state has the wrong number of stages");

  Tensor<T> x;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& sc = cfg.stages[i];
    const StageState<T>& ss = st.stages[i];
    const std::string stage = "stage" + std::to_string(i + 1);
    if (i == 0) {
      x = patch_embed(clip, ss.merge, ctx.nested("patch_embed"));
      detail::require_finite(x, "patch_embed");
    } else {
      x = patch_merge(x, ss.merge, ctx.nested(stage + ".merge"));
      detail::require_finite(x, stage + ".merge");
    }
    if (stage_maps_out != nullptr) stage_maps_out->push_back({x.extent(0), x.extent(1), x.extent(2)});
    const ExecContext peg_ctx = ctx.nested(stage + ".peg");
    for (std::size_t j = 0; j < ss.blocks.size(); ++j) {
      const std::string block = stage + ".block" + std::to_string(j);
      x = dualformer_block(x, ss.blocks[j], j == 0 ? &ss.peg : nullptr, sc, ctx.nested(block), &peg_ctx);
      detail::require_finite(x, block);
    }
  }
  const ExecContext head_ctx = ctx.nested("head");
  auto s = head_ctx.scope("", CostKind::head);
  const Tensor<T> pooled = global_average_pool(x, head_ctx);
  Logits<T> out{st.head(pooled, head_ctx).reshaped({cfg.num_classes})};
  detail::require_finite(out.values, "head");
  return out;
}

}  // namespace dualformer
