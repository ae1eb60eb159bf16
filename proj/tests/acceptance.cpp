// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 3 7        run the listed criteria
//
// A criterion passes only when its check holds and it finishes inside its
// time budget. The exit status is the number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dualformer.hpp"
#include "dualformer/checks/suites.hpp"

namespace df = dualformer;
namespace ck = dualformer::checks;
using df::Count;
using df::Extent3;
using df::Tensor;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<Verdict()> run;
};

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

Tensor<double> random_clip(Extent3 input, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ck::random_tensor({input.t, input.h, input.w, df::kInputChannels}, rng);
}

std::string failed_names(const std::vector<ck::CheckResult>& results) {
  std::string out;
  for (const auto& r : results) {
    if (!r.passed()) out += (out.empty() ? "" : ", ") + r.name + fmt(" (%.3g, seed %llu)", r.max_error, (unsigned long long)r.seed);
  }
  return out;
}

Verdict stage_one_reduction() {
  const auto r = df::compare_report(df::preset("tiny"));
  const auto& a = r.analytic.at(0);
  const double ratio = static_cast<double>(a.tokens) / static_cast<double>(a.priors);
  return {a.tokens == 50176 && a.priors == 456 && ratio >= 109.5 && ratio <= 110.5,
          fmt("M=%zu S=%zu M/S=%.3f", a.tokens, a.priors, ratio)};
}

Verdict pyramid_cardinality() {
  const df::PyramidSpec spec{{df::PyramidScale::of(1, 1, 1), df::PyramidScale::of(2, 2, 2), df::PyramidScale::of(4, 4, 4)}};
  bool ok = true;
  std::string maps;
  for (const Extent3 map : {Extent3{16, 56, 56}, Extent3{4, 4, 4}, Extent3{8, 28, 28}}) {
    const std::size_t s = spec.prior_count(map);
    const std::size_t materialized =
        df::pyramid_downsample(Tensor<double>({map.t, map.h, map.w, 2}, 1.0), spec,
                               df::averaging_pyramid_kernels<double>(spec, map, 2))
            .tokens.extent(0);
    ok = ok && s == 73 && materialized == 73;
    maps += fmt(" %s:%zu/%zu", map.str().c_str(), s, materialized);
  }
  return {ok, "S (counted/materialized)" + maps};
}

Verdict parameter_counts() {
  const std::vector<std::pair<const char*, double>> targets{{"tiny", 21.8e6}, {"small", 48.9e6}, {"base", 86.8e6}};
  bool ok = true;
  std::string detail;
  for (const auto& [name, target] : targets) {
    const double n = static_cast<double>(df::count_params(df::preset(name)).totals.params);
    const double rel = n / target - 1.0;
    ok = ok && std::abs(rel) <= 0.05;
    detail += fmt("%s%s=%.2fM(%+.1f%%)", detail.empty() ? "" : " ", name, n / 1e6, 100 * rel);
  }
  return {ok, detail};
}

Verdict mac_totals() {
  const auto r = df::count_macs(df::preset("tiny"), Extent3{32, 224, 224});
  const double g = static_cast<double>(r.totals.macs) / 1e9;
  const double mlp = r.shares.at(df::CostKind::mlp);
  return {std::abs(g / 60.0 - 1.0) <= 0.20 && std::abs(mlp - 0.50) <= 0.15,
          fmt("MACs=%.2fG mlp share=%.3f", g, mlp)};
}

Verdict suite_verdict(const ck::CheckResult& r, std::size_t min_samples) {
  return {r.passed() && r.samples >= min_samples,
          fmt("%s: max|d|=%.3g over %zu instances (tol %.0e)", r.name.c_str(), r.max_error, r.samples, r.tolerance)};
}

Verdict lw_oracle() {
  ck::SuiteOptions o;
  o.seed = 101;
  o.trials = 120;
  return suite_verdict(ck::check_lw_oracle(o), 100);
}

Verdict pooling_oracle() {
  ck::SuiteOptions o;
  o.seed = 102;
  o.trials = 120;
  return suite_verdict(ck::check_pyramid_pooling(o), 100);
}

Verdict gradients() {
  ck::SuiteOptions o;
  o.seed = 103;
  o.coords = 20;
  const auto results = ck::run_gradient_suite(o, df::micro_config());
  bool ok = true;
  double worst = 0;
  for (const auto& r : results) {
    ok = ok && r.passed() && r.samples >= 20;
    worst = std::max(worst, r.max_error);
  }
  std::string detail = fmt("%zu checks, worst relative error %.3g (tol 1e-4)", results.size(), worst);
  if (!ok) detail += "; failed: " + failed_names(results);
  return {ok && results.size() == 6, detail};
}

Verdict residual_identity() {
  std::mt19937_64 rng(104);
  std::vector<df::ModelConfig> configs{df::micro_config()};
  for (int i = 0; i < 4; ++i) configs.push_back(ck::random_micro_config(rng));
  std::size_t blocks = 0;
  for (const auto& cfg : configs) {
    auto st = ck::random_state(cfg, rng(), 0.3);
    ck::zero_residual_branches(st);
    const auto maps = df::stage_maps(cfg);
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
      for (std::size_t j = 0; j < cfg.stages[i].blocks; ++j) {
        const Tensor<double> x = ck::random_tensor({maps[i].t, maps[i].h, maps[i].w, cfg.stages[i].channels}, rng);
        const auto* peg = j == 0 ? &st.stages[i].peg : nullptr;
        if (!(df::dualformer_block(x, st.stages[i].blocks[j], peg, cfg.stages[i]) == x)) {
          return {false, fmt("%s stage%zu.block%zu is not the identity", cfg.name.c_str(), i + 1, j)};
        }
        ++blocks;
      }
    }
    const auto clip = random_clip(cfg.input, rng());
    if (!(df::forward(clip, cfg, st).values == ck::reduced_pipeline(clip, st))) {
      return {false, cfg.name + ": forward differs from embed->merge->head"};
    }
  }
  return {true, fmt("%zu blocks bitwise identity; forward == embed->merge->head on %zu configs", blocks,
                    configs.size())};
}

Verdict shape_contract() {
  const auto run = [](const df::ModelConfig& cfg, double& seconds, std::vector<Extent3>& maps) {
    const auto st = df::init_random(cfg, 105);
    const auto clip = random_clip(cfg.input, 106);
    df::ExecContext ctx;
    ctx.threads = worker_threads();
    const auto t0 = std::chrono::steady_clock::now();
    const auto logits = df::forward(clip, cfg, st, ctx, &maps);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return logits.values.size() == cfg.num_classes && df::all_finite(logits.values);
  };
  double micro_s = 0, tiny_s = 0;
  std::vector<Extent3> micro_maps, tiny_maps;
  const bool micro_ok = run(df::micro_config(), micro_s, micro_maps) &&
                        micro_maps == std::vector<Extent3>{{2, 8, 8}, {2, 4, 4}, {2, 2, 2}, {2, 1, 1}} &&
                        micro_s < 10.0;
  const auto tiny = df::preset("tiny");
  const bool tiny_ok = run(tiny, tiny_s, tiny_maps) && tiny.num_classes == 400 &&
                       tiny_maps == std::vector<Extent3>{{16, 56, 56}, {16, 28, 28}, {16, 14, 14}, {16, 7, 7}} &&
                       tiny_s < 600.0;
  std::string path;
  for (const auto& m : tiny_maps) path += (path.empty() ? "" : "->") + m.str();
  return {micro_ok && tiny_ok,
          fmt("tiny %s, 400 logits in %.1f s (%u threads); micro in %.3f s", path.c_str(), tiny_s, worker_threads(),
              micro_s)};
}

Verdict instrumented_consistency() {
  std::mt19937_64 rng(107);
  std::size_t stages = 0;
  for (int i = 0; i < 20; ++i) {
    const auto cfg = ck::random_micro_config(rng);
    const auto st = df::init_random(cfg, rng());
    const auto clip = random_clip(cfg.input, rng());
    const auto inst = df::instrument_forward(clip, cfg, st);
    const Count analytic = df::count_macs(cfg).totals.macs;
    if (inst.totals.macs != analytic) {
      return {false, fmt("config %d: instrumented %llu != analytic %llu", i, (unsigned long long)inst.totals.macs,
                         (unsigned long long)analytic)};
    }
    for (const auto& a : inst.analytic) {
      const Count lower = a.blocks * (a.lw + a.gp.factorized);
      if (df::attention_subtotal(inst, a.stage) < lower) {
        return {false, fmt("config %d stage %zu: attention subtotal below lw+gp", i, a.stage)};
      }
      ++stages;
    }
  }
  return {true, fmt("20 configs equal totals; attention subtotal >= lw+gp on %zu stages", stages)};
}

Verdict scaling_law() {
  bool ok = true;
  for (std::size_t m : {784u, 3136u, 12544u}) {
    const Count lw1 = df::cost_lw(8, 7, 7, m, 64), lw2 = df::cost_lw(8, 7, 7, 2 * m, 64),
                lw4 = df::cost_lw(8, 7, 7, 4 * m, 64);
    const Count f1 = df::cost_full(m, 64), f2 = df::cost_full(2 * m, 64), f4 = df::cost_full(4 * m, 64);
    ok = ok && lw2 == 2 * lw1 && lw4 == 4 * lw1 && f2 == 4 * f1 && f4 == 16 * f1;
  }
  std::string detail = ok ? "lw linear, full quadratic" : "scaling ratios wrong";
  for (const auto& name : df::preset_names()) {
    for (const auto& a : df::compare_report(df::preset(name)).analytic) {
      const Count dual = a.lw + a.gp.factorized;
      if (!(dual < a.full)) {
        ok = false;
        detail += fmt("; %s stage %zu: lw+gp=%llu >= full=%llu (full/dual=%.3f, S=%zu=M)", name.c_str(), a.stage,
                      (unsigned long long)dual, (unsigned long long)a.full,
                      static_cast<double>(a.full) / static_cast<double>(dual), a.priors);
      }
    }
  }
  return {ok, detail};
}

Verdict inflation() {
  std::mt19937_64 rng(108);
  double worst = 0;
  std::size_t cases = 0;
  for (std::size_t t : {1u, 2u, 3u, 4u, 8u}) {
    const Tensor<double> frame = ck::random_tensor({16, 16, 3}, rng);
    const Tensor<double> w = ck::random_tensor({4, 4, 3, 8}, rng);
    Tensor<double> clip({2 * t, 16, 16, 3});
    for (std::size_t f = 0; f < 2 * t; ++f) std::copy_n(frame.data(), frame.size(), clip.data() + f * frame.size());
    auto conv = df::PatchConv3D<double>::zeros({t, 4, 4}, 3, 8);
    conv.weight = df::inflate_2d(w, t);
    const auto y = df::patch_conv3d(clip, conv);
    const auto expected = df::oracle::conv2d_ref(frame, w, 4, 4);
    const std::size_t plane = expected.size();
    for (std::size_t f = 0; f < 2; ++f) {
      const Tensor<double> slice(expected.shape(), std::vector<double>(y.data() + f * plane, y.data() + (f + 1) * plane));
      worst = std::max(worst, df::max_abs_diff(slice, expected));
    }

    const Tensor<double> dw = ck::random_tensor({3, 3, 3}, rng);
    df::ConvKernel3D<double> k{{t, 3, 3}, {1, 1, 1}, 3, df::inflate_depthwise_2d(dw, t), std::nullopt};
    const auto yd = df::depthwise_conv3d(clip, k, {0, 0, 0});
    Tensor<double> dense({3, 3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 9; ++i) dense[(i * 3 + c) * 3 + c] = dw[c * 9 + i];
    const auto expected_dw = df::oracle::conv2d_ref(frame, dense, 1, 1);
    const Tensor<double> first(expected_dw.shape(), std::vector<double>(yd.data(), yd.data() + expected_dw.size()));
    worst = std::max(worst, df::max_abs_diff(first, expected_dw));
    cases += 2;
  }
  return {worst < 1e-10, fmt("%zu kernels (t in 1,2,3,4,8), max|d|=%.3g vs 2D oracle", cases, worst)};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "stage-1 key/value reduction", 1, stage_one_reduction},
      {2, "pyramid cardinality", 1, pyramid_cardinality},
      {3, "parameter counts", 1, parameter_counts},
      {4, "MAC totals", 1, mac_totals},
      {5, "LW-MSA oracle equivalence", 60, lw_oracle},
      {6, "GP-MSA pooling oracle", 30, pooling_oracle},
      {7, "gradient checks", 300, gradients},
      {8, "residual-identity property", 10, residual_identity},
      {9, "shape contract", 600, shape_contract},
      {10, "instrumented-vs-analytic consistency", 120, instrumented_consistency},
      {11, "complexity scaling law", 1, scaling_law},
      {12, "inflation correctness", 10, inflation},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const Criterion& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s < c.budget_s;
    const bool passed = v.passed && in_time;
    failures += passed ? 0 : 1;
    std::cout << (passed ? "PASS" : "FAIL") << fmt("  %2d  %-38s ", c.id, c.title) << v.detail
              << fmt("  [%.2f s / %.0f s%s]", s, c.budget_s, in_time ? "" : " over budget") << std::endl;
  }
  return failures;
}
