#pragma once

// Randomized property suites shared by the command-line checker and the
// acceptance tests. Each suite returns one result per check; a check passes
// when its worst observed error is below its tolerance.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dualformer/checks/fixtures.hpp"

namespace dualformer::checks {

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  bool passed() const { return max_error < tolerance; }
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  std::size_t trials = 100;  // oracle instances per check
  std::size_t coords = 20;   // gradient coordinates per check
  double eps = kFiniteDiffEps;
  double fault = 0.0;  // test hook: perturbs the implementation side of every comparison
};

inline constexpr double kOracleTol = 1e-10;
inline constexpr double kGradientTol = 1e-4;

namespace detail {

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Extent3 random_map(std::mt19937_64& rng, std::size_t max_axis) {
  return {pick(rng, 1, max_axis), pick(rng, 1, max_axis), pick(rng, 1, max_axis)};
}

inline PyramidSpec random_spec(Extent3 map, std::mt19937_64& rng) {
  PyramidSpec spec;
  const std::size_t n = pick(rng, 1, 3);
  for (std::size_t i = 0; i < n; ++i) {
    spec.scales.push_back(pick(rng, 0, 5) == 0 ? PyramidScale::whole() : PyramidScale{random_divisor(map, rng)});
  }
  return spec;
}

inline void inject(Tensor<double>& x, double fault) {
  if (fault != 0.0) x[x.size() / 2] += fault;
}

inline double tensor_error(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  return max_abs_diff(a, b);
}

}  // namespace detail

/// Windowed attention core against block-diagonal masked full attention
/// over raster order, same projections on both sides.
inline CheckResult check_lw_oracle(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed);
  CheckResult r{"lw_attention_core vs masked full attention", 0.0, kOracleTol, o.trials, o.seed};
  for (std::size_t i = 0; i < o.trials; ++i) {
    const Extent3 map = detail::random_map(rng, 8);
    const WindowGrid grid(map, random_divisor(map, rng));
    const std::size_t heads = std::size_t{1} << detail::pick(rng, 0, 2);
    const std::size_t width = heads * (std::size_t{1} << detail::pick(rng, 0, 3));
    const AttentionParams<double> p = random_attention(width, heads, rng);
    const Tensor<double> normed = random_tensor({map.t, map.h, map.w, width}, rng);
    Tensor<double> fast = lw_attention_core(normed, grid, p);
    detail::inject(fast, o.fault);
    const oracle::AttentionMask mask = oracle::window_mask(grid);
    const Tensor<double> slow = reference_mha(rows_of(normed), rows_of(normed), p, &mask).reshaped(fast.shape());
    r.max_error = std::max(r.max_error, detail::tensor_error(fast, slow));
  }
  return r;
}

/// Pyramid downsampling with uniform-average kernels against adaptive
/// average pooling; a wrong prior count counts as an infinite error.
inline CheckResult check_pyramid_pooling(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 1);
  CheckResult r{"pyramid_downsample vs adaptive average pooling", 0.0, kOracleTol, o.trials, o.seed};
  for (std::size_t i = 0; i < o.trials; ++i) {
    const Extent3 map = detail::random_map(rng, 8);
    const PyramidSpec spec = detail::random_spec(map, rng);
    const std::size_t width = detail::pick(rng, 1, 16);
    const Tensor<double> x = random_tensor({map.t, map.h, map.w, width}, rng);
    GlobalPriors<double> priors = pyramid_downsample(x, spec, averaging_pyramid_kernels<double>(spec, map, width));
    detail::inject(priors.tokens, o.fault);
    if (priors.tokens.extent(0) != spec.prior_count(map)) {
      r.max_error = std::numeric_limits<double>::infinity();
      continue;
    }
    r.max_error = std::max(r.max_error, detail::tensor_error(priors.tokens, reference_priors(x, spec)));
  }
  return r;
}

/// Whole GP-MSA sub-layer against pooled cross-attention on the reference.
inline CheckResult check_gp_oracle(const SuiteOptions& o) {
  std::mt19937_64 rng(o.seed + 2);
  const std::size_t trials = std::max<std::size_t>(1, o.trials / 4);
  CheckResult r{"gp_msa_sublayer vs pooled full cross-attention", 0.0, kOracleTol, trials, o.seed};
  for (std::size_t i = 0; i < trials; ++i) {
    const Extent3 map = detail::random_map(rng, 6);
    const PyramidSpec spec = detail::random_spec(map, rng);
    const std::size_t heads = detail::pick(rng, 1, 2);
    const std::size_t width = heads * detail::pick(rng, 1, 6);
    const AttentionParams<double> p = random_attention(width, heads, rng);
    const Tensor<double> x = random_tensor({map.t, map.h, map.w, width}, rng);
    Tensor<double> fast = gp_msa_sublayer(x, spec, averaging_pyramid_kernels<double>(spec, map, width), p);
    detail::inject(fast, o.fault);
    r.max_error = std::max(r.max_error, detail::tensor_error(fast, reference_gp_sublayer(x, spec, p)));
  }
  return r;
}

inline std::vector<CheckResult> run_oracle_suite(const SuiteOptions& o) {
  return {check_lw_oracle(o), check_pyramid_pooling(o), check_gp_oracle(o)};
}

namespace detail {

template <class X>
using elem_t = typename std::decay_t<X>::value_type;

template <class F>
double input_and_param_error(F&& f_input, const Tensor<double>& x, auto&& f_param, const Tensor<double>& w,
                             std::size_t out_size, const SuiteOptions& o, std::mt19937_64& rng) {
  const Tensor<double> r = random_tensor({out_size}, rng);
  const double a = worst_gradient_error(f_input, x, r, sample_coords(x.size(), o.coords, rng), o.eps, o.fault);
  const double b = worst_gradient_error(f_param, w, r, sample_coords(w.size(), o.coords, rng), o.eps, o.fault);
  return std::max(a, b);
}

}  // namespace detail

/// Dual-number derivatives against central differences for every sub-layer
/// (w.r.t. its input and one of its parameter tensors) and for the
/// cross-entropy loss of `cfg` w.r.t. its parameters.
inline std::vector<CheckResult> run_gradient_suite(const SuiteOptions& o, const ModelConfig& cfg) {
  using detail::elem_t;
  std::mt19937_64 rng(o.seed);
  std::vector<CheckResult> out;
  const auto record = [&](std::string name, double err, std::size_t samples) {
    out.push_back({std::move(name), err, kGradientTol, samples, o.seed});
  };
  const std::size_t width = 8, heads = 2;
  const AttentionParams<double> p = random_attention(width, heads, rng);
  const Tensor<double> rows = random_tensor({6, width}, rng);
  const Extent3 map{2, 4, 4};
  const Tensor<double> x = random_tensor({map.t, map.h, map.w, width}, rng);

  {
    auto f_x = [&](const auto& in) {
      using U = elem_t<decltype(in)>;
      return layer_norm(in, tensor_cast<U>(p.ln1.gain), tensor_cast<U>(p.ln1.shift));
    };
    auto f_w = [&](const auto& g) {
      using U = elem_t<decltype(g)>;
      return layer_norm(tensor_cast<U>(rows), g, tensor_cast<U>(p.ln1.shift));
    };
    record("layer_norm", detail::input_and_param_error(f_x, rows, f_w, p.ln1.gain, rows.size(), o, rng),
           2 * o.coords);
  }
  {
    auto f_x = [&](const auto& in) { return mlp_residual(in, cast_attention<elem_t<decltype(in)>>(p)); };
    auto f_w = [&](const auto& w) {
      using U = elem_t<decltype(w)>;
      auto pu = cast_attention<U>(p);
      pu.mlp_in.weight = w;
      return mlp_residual(tensor_cast<U>(rows), pu);
    };
    record("mlp", detail::input_and_param_error(f_x, rows, f_w, p.mlp_in.weight, rows.size(), o, rng), 2 * o.coords);
  }
  {
    const WindowGrid grid(map, {2, 2, 2});
    auto f_x = [&](const auto& in) { return lw_msa_sublayer(in, grid, cast_attention<elem_t<decltype(in)>>(p)); };
    auto f_w = [&](const auto& w) {
      using U = elem_t<decltype(w)>;
      auto pu = cast_attention<U>(p);
      pu.k.weight = w;
      return lw_msa_sublayer(tensor_cast<U>(x), grid, pu);
    };
    record("lw_msa_sublayer", detail::input_and_param_error(f_x, x, f_w, p.k.weight, x.size(), o, rng),
           2 * o.coords);
  }
  {
    const PyramidSpec spec{{PyramidScale::of(1, 1, 1), PyramidScale::of(2, 2, 2)}};
    const PyramidKernels<double> kernels = random_pyramid(spec, map, width, rng);
    auto f_x = [&](const auto& in) {
      using U = elem_t<decltype(in)>;
      return gp_msa_sublayer(in, spec, cast_pyramid<U>(kernels), cast_attention<U>(p));
    };
    auto f_w = [&](const auto& w) {
      using U = elem_t<decltype(w)>;
      auto ku = cast_pyramid<U>(kernels);
      ku[1].temporal.weights = w;
      return gp_msa_sublayer(tensor_cast<U>(x), spec, ku, cast_attention<U>(p));
    };
    record("gp_msa_sublayer",
           detail::input_and_param_error(f_x, x, f_w, kernels[1].temporal.weights, x.size(), o, rng), 2 * o.coords);
  }
  {
    PegParams<double> peg_p = PegParams<double>::zeros(width);
    fill_uniform(peg_p.kernel.weights, rng, 0.5);
    fill_uniform(*peg_p.kernel.bias, rng, 0.1);
    auto f_x = [&](const auto& in) {
      using U = elem_t<decltype(in)>;
      return peg(in, PegParams<U>{cast_kernel<U>(peg_p.kernel)});
    };
    auto f_w = [&](const auto& w) {
      using U = elem_t<decltype(w)>;
      auto k = cast_kernel<U>(peg_p.kernel);
      k.weights = w;
      return peg(tensor_cast<U>(x), PegParams<U>{k});
    };
    record("peg", detail::input_and_param_error(f_x, x, f_w, peg_p.kernel.weights, x.size(), o, rng), 2 * o.coords);
  }
  {
    const ModelState<double> st = random_state(cfg, o.seed, 0.3);
    const Tensor<double> clip = random_tensor({cfg.input.t, cfg.input.h, cfg.input.w, kInputChannels}, rng);
    const std::size_t label = o.seed % cfg.num_classes;
    const auto coords = sample_coords(parameter_count(st), o.coords, rng);
    record("model cross-entropy", model_gradient_error(cfg, st, clip, label, coords, o.eps, o.fault), o.coords);
  }
  return out;
}

}  // namespace dualformer::checks
