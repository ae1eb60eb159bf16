#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "dualformer/attention/multi_head.hpp"
#include "dualformer/attention/pyramid.hpp"
#include "dualformer/attention/sublayers.hpp"
#include "dualformer/model/config.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

template <class T>
struct BlockState {
  AttentionParams<T> lw;
  AttentionParams<T> gp;
  PyramidKernels<T> pyramid;
};

template <class T>
struct StageState {
  PatchConv3D<T> merge;  // patch embedding for the first stage
  PegParams<T> peg;      // applied in the first block only
  std::vector<BlockState<T>> blocks;
};

template <class T>
struct ModelState {
  std::vector<StageState<T>> stages;
  Linear<T> head;
};

/// Correctly shaped state with zero weights/biases and unit norm gains.
template <class T>
ModelState<T> allocate_state(const ModelConfig& cfg) {
  validate(cfg);
  const std::vector<Extent3> maps = stage_maps(cfg);
  ModelState<T> st;
  std::size_t cin = kInputChannels;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& s = cfg.stages[i];
    StageState<T> stage{PatchConv3D<T>::zeros(s.merge, cin, s.channels), PegParams<T>::zeros(s.channels), {}};
    for (std::size_t j = 0; j < s.blocks; ++j) {
      stage.blocks.push_back({AttentionParams<T>::zeros(s.channels, s.heads),
                              AttentionParams<T>::zeros(s.channels, s.heads),
                              zero_pyramid_kernels<T>(s.pyramid, maps[i], s.channels)});
    }
    st.stages.push_back(std::move(stage));
    cin = s.channels;
  }
  st.head = Linear<T>::zeros(cfg.stages.back().channels, cfg.num_classes);
  return st;
}

enum class ParamRole { weight, bias, gain, shift };

/// Calls f(name, role, tensor_0, tensor_1, ...) for every parameter tensor of
/// one or more structurally identical states, in a fixed order. Names follow
///   patch_embed.*, stage{i}.merge.*, stage{i}.peg.*,
///   stage{i}.block{j}.{lw|gp}.{q|k|v|out|mlp_in|mlp_out}.{weight|bias},
///   stage{i}.block{j}.{lw|gp}.{ln1|ln2}.{gain|shift},
///   stage{i}.block{j}.gp.pyramid{s}.{temporal|spatial}.{weight|bias},
///   head.{weight|bias}
/// with stages counted from 1 and blocks from 0.
template <class F, class First, class... Rest>
void for_each_parameter(F&& f, First& first, Rest&... rest) {
  const auto visit = [&](const std::string& name, ParamRole role, auto get) { f(name, role, get(first), get(rest)...); };
  const auto visit_linear = [&](const std::string& name, auto get) {
    visit(name + ".weight", ParamRole::weight, [get](auto& s) -> auto& { return get(s).weight; });
    visit(name + ".bias", ParamRole::bias, [get](auto& s) -> auto& { return get(s).bias; });
  };
  const auto visit_norm = [&](const std::string& name, auto get) {
    visit(name + ".gain", ParamRole::gain, [get](auto& s) -> auto& { return get(s).gain; });
    visit(name + ".shift", ParamRole::shift, [get](auto& s) -> auto& { return get(s).shift; });
  };
  const auto visit_depthwise = [&](const std::string& name, auto get) {
    visit(name + ".weight", ParamRole::weight, [get](auto& s) -> auto& { return get(s).weights; });
    visit(name + ".bias", ParamRole::bias, [get](auto& s) -> auto& { return *get(s).bias; });
  };
  const auto visit_attention = [&](const std::string& name, auto get) {
    visit_norm(name + ".ln1", [get](auto& s) -> auto& { return get(s).ln1; });
    visit_linear(name + ".q", [get](auto& s) -> auto& { return get(s).q; });
    visit_linear(name + ".k", [get](auto& s) -> auto& { return get(s).k; });
    visit_linear(name + ".v", [get](auto& s) -> auto& { return get(s).v; });
    visit_linear(name + ".out", [get](auto& s) -> auto& { return get(s).out; });
    visit_norm(name + ".ln2", [get](auto& s) -> auto& { return get(s).ln2; });
    visit_linear(name + ".mlp_in", [get](auto& s) -> auto& { return get(s).mlp_in; });
    visit_linear(name + ".mlp_out", [get](auto& s) -> auto& { return get(s).mlp_out; });
  };

  for (std::size_t i = 0; i < first.stages.size(); ++i) {
    const std::string stage = "stage" + std::to_string(i + 1);
    visit_linear(i == 0 ? std::string("patch_embed") : stage + ".merge",
                 [i](auto& s) -> auto& { return s.stages[i].merge; });
    visit_depthwise(stage + ".peg", [i](auto& s) -> auto& { return s.stages[i].peg.kernel; });
    for (std::size_t j = 0; j < first.stages[i].blocks.size(); ++j) {
      const std::string block = stage + ".block" + std::to_string(j);
      visit_attention(block + ".lw", [i, j](auto& s) -> auto& { return s.stages[i].blocks[j].lw; });
      visit_attention(block + ".gp", [i, j](auto& s) -> auto& { return s.stages[i].blocks[j].gp; });
      for (std::size_t k = 0; k < first.stages[i].blocks[j].pyramid.size(); ++k) {
        const std::string lvl = block + ".gp.pyramid" + std::to_string(k);
        visit_depthwise(lvl + ".temporal",
                        [i, j, k](auto& s) -> auto& { return s.stages[i].blocks[j].pyramid[k].temporal; });
        visit_depthwise(lvl + ".spatial",
                        [i, j, k](auto& s) -> auto& { return s.stages[i].blocks[j].pyramid[k].spatial; });
      }
    }
  }
  visit_linear("head", [](auto& s) -> auto& { return s.head; });
}

template <class T>
std::size_t parameter_count(const ModelState<T>& st) {
  std::size_t n = 0;
  for_each_parameter([&](const std::string&, ParamRole, const Tensor<T>& t) { n += t.size(); }, st);
  return n;
}

inline constexpr double kInitStd = 0.02;

/// Reproducible initialization: truncated normal (|z| <= 2) with std 0.02 for
/// linear and conv weights, zero biases and shifts, unit gains, zero PEG.
inline ModelState<double> init_random(const ModelConfig& cfg, std::uint64_t seed) {
  ModelState<double> st = allocate_state<double>(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto truncated = [&] {
    double z = normal(rng);
    while (std::abs(z) > 2.0) z = normal(rng);
    return z * kInitStd;
  };
  for_each_parameter(
      [&](const std::string& name, ParamRole role, Tensor<double>& t) {
        const bool is_peg = name.find(".peg.") != std::string::npos;
        switch (role) {
          case ParamRole::weight:
            for (double& v : t.values()) v = is_peg ? 0.0 : truncated();
            break;
          case ParamRole::gain:
            for (double& v : t.values()) v = 1.0;
            break;
          case ParamRole::bias:
          case ParamRole::shift:
            for (double& v : t.values()) v = 0.0;
            break;
        }
      },
      st);
  return st;
}

/// Converts every parameter to another scalar type.
template <class U, class T>
ModelState<U> cast_state(const ModelState<T>& src, const ModelConfig& cfg) {
  ModelState<U> dst = allocate_state<U>(cfg);
  for_each_parameter([](const std::string&, ParamRole, Tensor<U>& d, const Tensor<T>& s) { d = tensor_cast<U>(s); },
                     dst, src);
  return dst;
}

namespace detail {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;

inline std::uint64_t fnv1a(std::uint64_t h, const Tensor<double>& t) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// FNV-1a over the raw bytes of a tensor.
inline std::uint64_t checksum(const Tensor<double>& t) { return detail::fnv1a(detail::kFnvOffset, t); }

/// FNV-1a over every parameter's bytes, in visiting order.
inline std::uint64_t checksum(const ModelState<double>& st) {
  std::uint64_t h = detail::kFnvOffset;
  for_each_parameter([&](const std::string&, ParamRole, const Tensor<double>& t) { h = detail::fnv1a(h, t); }, st);
  return h;
}

}  // namespace dualformer
