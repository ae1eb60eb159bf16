#pragma once

// Seeded random tensors, parameters and configurations, plus slow reference
// sub-layers assembled from the oracle module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dualformer/attention/multi_head.hpp"
#include "dualformer/attention/pyramid.hpp"
#include "dualformer/attention/sublayers.hpp"
#include "dualformer/attention/window.hpp"
#include "dualformer/model/config.hpp"
#include "dualformer/model/forward.hpp"
#include "dualformer/model/state.hpp"
#include "dualformer/numerics/dual.hpp"
#include "dualformer/numerics/gradcheck.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/tensor.hpp"
#include "dualformer/oracle/reference.hpp"

namespace dualformer::checks {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline void fill_uniform(Tensor<double>& t, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : t.values()) v = u(rng);
}

/// Attention parameters with every tensor random (biases and LN affine included).
inline AttentionParams<double> random_attention(std::size_t width, std::size_t heads, std::mt19937_64& rng,
                                                double scale = 0.4) {
  auto p = AttentionParams<double>::zeros(width, heads);
  for (auto* l : {&p.q, &p.k, &p.v, &p.out, &p.mlp_in, &p.mlp_out}) {
    fill_uniform(l->weight, rng, scale);
    fill_uniform(l->bias, rng, 0.1);
  }
  for (auto* n : {&p.ln1, &p.ln2}) {
    fill_uniform(n->gain, rng, 0.3);
    for (double& g : n->gain.values()) g += 1.0;
    fill_uniform(n->shift, rng, 0.1);
  }
  return p;
}

inline PyramidKernels<double> random_pyramid(const PyramidSpec& spec, Extent3 map, std::size_t width,
                                             std::mt19937_64& rng) {
  auto k = zero_pyramid_kernels<double>(spec, map, width);
  for (auto& lvl : k) {
    for (auto* c : {&lvl.temporal, &lvl.spatial}) {
      fill_uniform(c->weights, rng, 0.5);
      fill_uniform(*c->bias, rng, 0.1);
    }
  }
  return k;
}

inline Tensor<double> rows_of(const Tensor<double>& x) {
  return x.reshaped({x.size() / x.shape().back(), x.shape().back()});
}

/// Columns [off, off + n) of a row-major matrix.
inline Tensor<double> columns(const Tensor<double>& x, std::size_t off, std::size_t n) {
  const std::size_t rows = x.extent(0), d = x.extent(1);
  Tensor<double> out({rows, n});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * d + off + j];
  return out;
}

/// Multi-head attention rebuilt on the reference: project with the same
/// weights, run the masked reference per head, concatenate, out-project.
inline Tensor<double> reference_mha(const Tensor<double>& q_src, const Tensor<double>& kv_src,
                                    const AttentionParams<double>& p, const oracle::AttentionMask* mask) {
  const Tensor<double> q = p.q(q_src), k = p.k(kv_src), v = p.v(kv_src);
  const std::size_t d = p.width(), hd = p.head_dim(), nq = q_src.extent(0);
  Tensor<double> concat({nq, d});
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor<double> qh = columns(q, h * hd, hd), kh = columns(k, h * hd, hd), vh = columns(v, h * hd, hd);
    const Tensor<double> oh =
        mask ? oracle::masked_attention_ref(qh, kh, vh, *mask) : oracle::full_attention_ref(qh, kh, vh);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t e = 0; e < hd; ++e) concat[i * d + h * hd + e] = oh[i * hd + e];
  }
  return p.out(concat);
}

/// LW-MSA sub-layer via block-diagonal masked full attention over raster order.
inline Tensor<double> reference_lw_sublayer(const Tensor<double>& x, const WindowGrid& grid,
                                            const AttentionParams<double>& p) {
  const oracle::AttentionMask mask = oracle::window_mask(grid);
  const Tensor<double> normed = rows_of(p.ln1(x));
  const Tensor<double> mid = add(rows_of(x), reference_mha(normed, normed, p, &mask));
  return mlp_residual(mid, p).reshaped(x.shape());
}

/// Priors from the average-pooling reference, concatenated in scale order.
inline Tensor<double> reference_priors(const Tensor<double>& normed, const PyramidSpec& spec) {
  const Extent3 map{normed.extent(0), normed.extent(1), normed.extent(2)};
  const std::size_t d = normed.extent(3);
  std::vector<double> rows;
  for (const auto& s : spec.scales) {
    const Tensor<double> pooled = oracle::adaptive_avg_pool3d_ref(normed, s.resolve(map));
    rows.insert(rows.end(), pooled.values().begin(), pooled.values().end());
  }
  const std::size_t count = rows.size() / d;
  return Tensor<double>({count, d}, std::move(rows));
}

/// GP-MSA sub-layer with averaging kernels, via reference pooling and
/// reference full cross-attention.
inline Tensor<double> reference_gp_sublayer(const Tensor<double>& x, const PyramidSpec& spec,
                                            const AttentionParams<double>& p) {
  const Tensor<double> normed = p.ln1(x);
  const Tensor<double> priors = reference_priors(normed, spec);
  const Tensor<double> mid = add(rows_of(x), reference_mha(rows_of(normed), priors, p, nullptr));
  return mlp_residual(mid, p).reshaped(x.shape());
}

/// Seeds coordinate `index` of tensor `t` in a Dual copy.
inline void seed(Tensor<Dual<double>>& t, std::size_t index) { t[index].d = 1.0; }

template <class U>
Linear<U> cast_linear(const Linear<double>& l) {
  return {tensor_cast<U>(l.weight), tensor_cast<U>(l.bias)};
}

template <class U>
AttentionParams<U> cast_attention(const AttentionParams<double>& p) {
  return {p.heads,
          cast_linear<U>(p.q),
          cast_linear<U>(p.k),
          cast_linear<U>(p.v),
          cast_linear<U>(p.out),
          {tensor_cast<U>(p.ln1.gain), tensor_cast<U>(p.ln1.shift)},
          {tensor_cast<U>(p.ln2.gain), tensor_cast<U>(p.ln2.shift)},
          cast_linear<U>(p.mlp_in),
          cast_linear<U>(p.mlp_out)};
}

template <class U>
ConvKernel3D<U> cast_kernel(const ConvKernel3D<double>& k) {
  ConvKernel3D<U> out{k.extent, k.stride, k.channels, tensor_cast<U>(k.weights), std::nullopt};
  if (k.bias) out.bias = tensor_cast<U>(*k.bias);
  return out;
}

template <class U>
PyramidKernels<U> cast_pyramid(const PyramidKernels<double>& ks) {
  PyramidKernels<U> out;
  for (const auto& lvl : ks) out.push_back({cast_kernel<U>(lvl.temporal), cast_kernel<U>(lvl.spatial)});
  return out;
}

/// Weighted-sum loss sum(y * r) of a tensor-valued map, evaluated both in
/// double (for finite differences) and in dual numbers (seeded per
/// coordinate). Returns the worst relative error over `coords`.
template <class F>
double worst_gradient_error(F&& f, const Tensor<double>& x, const Tensor<double>& r,
                            const std::vector<std::size_t>& coords, double eps = kFiniteDiffEps,
                            double fault = 0.0) {
  auto loss = [&](const Tensor<double>& in) {
    const Tensor<double> y = f(in);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  double worst = 0;
  for (std::size_t c : coords) {
    Tensor<Dual<double>> xd = tensor_cast<Dual<double>>(x);
    seed(xd, c);
    const Tensor<Dual<double>> yd = f(xd);
    double analytic = 0;
    for (std::size_t i = 0; i < yd.size(); ++i) analytic += yd[i].d * r[i];
    analytic *= 1.0 + fault;
    const double numeric = finite_diff_at(loss, x, c, eps);
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out(count);
  for (auto& c : out) c = pick(rng);
  return out;
}


inline std::size_t random_divisor(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> divs;
  for (std::size_t d = 1; d <= n; ++d)
    if (n % d == 0) divs.push_back(d);
  return divs[std::uniform_int_distribution<std::size_t>(0, divs.size() - 1)(rng)];
}

inline Extent3 random_divisor(Extent3 map, std::mt19937_64& rng) {
  return {random_divisor(map.t, rng), random_divisor(map.h, rng), random_divisor(map.w, rng)};
}

/// Small valid configuration with 1-4 stages, random widths, windows,
/// pyramids, temporal merge rates and input extents.
inline ModelConfig random_micro_config(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  ModelConfig cfg;
  const std::size_t n = pick(1, 4);
  std::vector<Extent3> merges;
  for (std::size_t i = 0; i < n; ++i) merges.push_back(i == 0 ? Extent3{pick(1, 2), 4, 4} : Extent3{pick(1, 2), 2, 2});
  Extent3 input{pick(1, 2), pick(1, 2), pick(1, 2)};
  for (auto it = merges.rbegin(); it != merges.rend(); ++it) input = input * *it;
  cfg.input = input;
  cfg.num_classes = pick(1, 12);
  Extent3 map = input;
  for (std::size_t i = 0; i < n; ++i) {
    map = map / merges[i];
    StageConfig s;
    s.merge = merges[i];
    s.heads = pick(1, 2);
    s.channels = s.heads * (std::size_t{1} << pick(1, 3));
    s.blocks = pick(1, 2);
    s.window = random_divisor(map, rng);
    const std::size_t scales = pick(1, 2);
    for (std::size_t k = 0; k < scales; ++k) {
      s.pyramid.scales.push_back(pick(0, 4) == 0 ? PyramidScale::whole()
                                                 : PyramidScale{random_divisor(map, rng)});
    }
    cfg.stages.push_back(s);
  }
  validate(cfg);
  return cfg;
}

/// init_random followed by uniform(-scale, scale) on every tensor (gains
/// centred on 1), so gradients are not dominated by the tiny init.
inline ModelState<double> random_state(const ModelConfig& cfg, std::uint64_t seed, double scale) {
  ModelState<double> st = init_random(cfg, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-scale, scale);
  for_each_parameter(
      [&](const std::string&, ParamRole role, Tensor<double>& t) {
        for (double& v : t.values()) v = (role == ParamRole::gain ? 1.0 : 0.0) + u(rng);
      },
      st);
  return st;
}

/// Zeroes every residual-branch output layer (attention output projection,
/// second MLP layer) and every PEG kernel.
inline void zero_residual_branches(ModelState<double>& st) {
  for_each_parameter(
      [](const std::string& name, ParamRole, Tensor<double>& t) {
        const bool branch_out = name.find(".out.") != std::string::npos ||
                                name.find(".mlp_out.") != std::string::npos ||
                                name.find(".peg.") != std::string::npos;
        if (branch_out) t = Tensor<double>(t.shape());
      },
      st);
}

/// embed -> merges -> GAP -> head, with no blocks at all.
inline Tensor<double> reduced_pipeline(const Tensor<double>& clip, const ModelState<double>& st) {
  Tensor<double> x = patch_embed(clip, st.stages[0].merge);
  for (std::size_t i = 1; i < st.stages.size(); ++i) x = patch_merge(x, st.stages[i].merge);
  return st.head(global_average_pool(x)).reshaped({st.head.bias.size()});
}

/// log-sum-exp(logits) - logits[label]
template <class T>
T cross_entropy(const Tensor<T>& logits, std::size_t label) {
  using std::exp;
  using std::log;
  T peak = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > peak) peak = logits[i];
  T sum(0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) sum += exp(logits[i] - peak);
  return log(sum) + peak - logits[label];
}

inline std::size_t tensor_index_of(const ModelState<double>& st, std::size_t flat, std::size_t& offset) {
  std::size_t seen = 0, which = 0, found = static_cast<std::size_t>(-1);
  for_each_parameter(
      [&](const std::string&, ParamRole, const Tensor<double>& t) {
        if (found == static_cast<std::size_t>(-1) && flat < seen + t.size()) {
          found = which;
          offset = flat - seen;
        }
        seen += t.size();
        ++which;
      },
      st);
  return found;
}

/// Worst relative error between dual-number and central-difference
/// derivatives of the cross-entropy loss w.r.t. flat parameter indices.
/// The differences run on an extended-precision forward pass: many deep
/// parameters have gradients near 1e-6, where double rounding noise in the
/// loss alone exceeds the tolerance.
inline double model_gradient_error(const ModelConfig& cfg, const ModelState<double>& st, const Tensor<double>& clip,
                                   std::size_t label, const std::vector<std::size_t>& coords,
                                   double eps = kFiniteDiffEps, double fault = 0.0) {
  double worst = 0;
  for (std::size_t flat : coords) {
    std::size_t offset = 0;
    const std::size_t target = tensor_index_of(st, flat, offset);
    auto with_param = [&](auto& state, auto&& edit) {
      std::size_t which = 0;
      for_each_parameter(
          [&](const std::string&, ParamRole, auto& t) {
            if (which++ == target) edit(t[offset]);
          },
          state);
    };
    ModelState<Dual<double>> sd = cast_state<Dual<double>>(st, cfg);
    with_param(sd, [](Dual<double>& v) { v.d = 1.0; });
    const double analytic =
        cross_entropy(forward(tensor_cast<Dual<double>>(clip), cfg, sd).values, label).d * (1.0 + fault);

    ModelState<long double> probe = cast_state<long double>(st, cfg);
    const Tensor<long double> clip_ld = tensor_cast<long double>(clip);
    long double orig = 0;
    with_param(probe, [&](long double& v) { orig = v; });
    auto loss_at = [&](long double value) {
      with_param(probe, [&](long double& v) { v = value; });
      return cross_entropy(forward(clip_ld, cfg, probe).values, label);
    };
    const long double h = eps;
    const double numeric = static_cast<double>((loss_at(orig + h) - loss_at(orig - h)) / (2 * h));
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

}  // namespace dualformer::checks
