#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dualformer/attention/multi_head.hpp"
#include "dualformer/attention/pyramid.hpp"
#include "dualformer/attention/sublayers.hpp"
#include "dualformer/attention/window.hpp"
#include "dualformer/errors.hpp"
#include "dualformer/model/config.hpp"
#include "dualformer/model/forward.hpp"
#include "dualformer/model/state.hpp"
#include "dualformer/numerics/exec.hpp"

namespace dualformer {

using Count = std::uint64_t;

// ---------------------------------------------------------------------------
// Closed-form attention costs. One unit = one multiply-accumulate.

/// Windowed attention: (thw)^2 D per window times M / thw windows = thw * M * D.
inline Count cost_lw(std::size_t t, std::size_t h, std::size_t w, std::size_t tokens, std::size_t width) {
  const Count thw = Count{t} * h * w;
  if (thw == 0 || tokens == 0 || width == 0) throw ConfigError("cost_lw: arguments must be positive");
  if (tokens % thw != 0) throw ShapeError("cost_lw: window volume " + std::to_string(thw) + " does not divide M");
  return thw * tokens * width;
}

/// Full space-time attention: M^2 D.
inline Count cost_full(std::size_t tokens, std::size_t width) {
  if (tokens == 0 || width == 0) throw ConfigError("cost_full: arguments must be positive");
  return Count{tokens} * tokens * width;
}

struct GpCost {
  Count unfactorized = 0;  // (S + N_g) M D
  Count factorized = 0;    // (S + sum_i (k1/T' + k2 k3 / (H' W'))) M D
  Count conv_exact = 0;    // MACs of the temporal-then-spatial convs as implemented
};

/// Pyramid attention costs on a map of extent `map` and width D. The
/// fractional terms are exact integers after multiplying by M D because
/// T' and H'W' both divide M.
inline GpCost cost_gp(const PyramidSpec& spec, Extent3 map, std::size_t width) {
  spec.validate(map);
  if (width == 0) throw ConfigError("cost_gp: width must be positive");
  const Count m = map.volume(), d = width, s = spec.prior_count(map), ng = spec.scale_count();
  GpCost c;
  c.unfactorized = (s + ng) * m * d;
  c.factorized = s * m * d;
  for (const PyramidScale& sc : spec.scales) {
    const Extent3 k = sc.resolve(map);
    c.factorized += Count{map.h} * map.w * k.t * d;  // (k1 / T') M D
    c.factorized += Count{map.t} * k.h * k.w * d;    // (k2 k3 / (H' W')) M D
    c.conv_exact += m * d + Count{k.t} * map.h * map.w * d;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Reports.

struct StageAnalytic {
  std::size_t stage = 0;  // 1-based
  Extent3 map;
  Extent3 window;
  std::size_t tokens = 0;  // M
  std::size_t width = 0;   // D
  std::size_t priors = 0;  // S
  std::size_t scales = 0;  // N_g
  std::size_t blocks = 0;
  Count lw = 0;  // per block
  GpCost gp;     // per block
  Count full = 0;
};

struct StageComparison {
  std::size_t stage = 0;
  Count full = 0;
  Count dual = 0;            // lw + gp factorized
  double full_over_dual = 0;
  double full_over_gp = 0;   // full / gp factorized
  double tokens_over_priors = 0;
  bool flagged = false;      // dual attention is not cheaper than full attention
};

struct CostTotals {
  Count macs = 0;
  Count params = 0;
  Count elementwise = 0;
};

struct CostReport {
  std::string unit = "MAC";
  std::vector<CostTerm> terms;
  CostTotals totals;
  std::map<CostKind, double> shares;
  std::vector<StageAnalytic> analytic;
  std::vector<StageComparison> comparisons;

  const CostTerm* find(const std::string& label) const {
    for (const auto& t : terms) {
      if (t.label == label) return &t;
    }
    return nullptr;
  }

  Count macs_of(CostKind kind) const {
    Count n = 0;
    for (const auto& t : terms) n += t.kind == kind ? t.macs : 0;
    return n;
  }

  /// Sum of MACs over terms whose label starts with `prefix`.
  Count macs_with_prefix(const std::string& prefix) const {
    Count n = 0;
    for (const auto& t : terms) n += t.label.rfind(prefix, 0) == 0 ? t.macs : 0;
    return n;
  }
};

/// Recomputes totals and shares from the terms. Shares are by MACs, or by
/// parameters for a params-only report.
inline void finalize(CostReport& r) {
  r.totals = {};
  for (const auto& t : r.terms) {
    r.totals.macs += t.macs;
    r.totals.params += t.params;
    r.totals.elementwise += t.elementwise;
  }
  r.shares.clear();
  const bool by_macs = r.totals.macs > 0;
  const Count denom = by_macs ? r.totals.macs : r.totals.params;
  for (CostKind k : kAllCostKinds) r.shares[k] = 0.0;
  if (denom == 0) return;
  for (const auto& t : r.terms) {
    r.shares[t.kind] += static_cast<double>(by_macs ? t.macs : t.params) / static_cast<double>(denom);
  }
}

namespace detail {

struct TermBuilder {
  std::vector<CostTerm> terms;

  void add(std::string label, CostKind kind, Count macs, Count params, Count elementwise) {
    terms.push_back({std::move(label), kind, macs, params, elementwise});
  }
};

inline Count attention_params(Count d) { return 4 * (d * d + d) + 2 * d; }
inline Count mlp_params(Count d) { return d * 4 * d + 4 * d + 4 * d * d + d + 2 * d; }

inline std::vector<CostTerm> analytic_terms(const ModelConfig& cfg) {
  validate(cfg);
  const std::vector<Extent3> maps = stage_maps(cfg);
  TermBuilder b;
  Count cin = kInputChannels;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& s = cfg.stages[i];
    const Extent3 map = maps[i];
    const Count m = map.volume(), d = s.channels, patch = s.merge.volume() * cin;
    const std::string stage = "stage" + std::to_string(i + 1);
    b.add(i == 0 ? "patch_embed" : stage + ".merge", i == 0 ? CostKind::embed : CostKind::conv, m * patch * d,
          patch * d + d, 0);
    const WindowGrid grid(map, s.window);
    const Count thw = grid.tokens_per_window(), prior_count = s.pyramid.prior_count(map);
    for (std::size_t j = 0; j < s.blocks; ++j) {
      const std::string block = stage + ".block" + std::to_string(j);
      // LW: each window projects its own tokens and attends to thw keys.
      b.add(block + ".lw.proj", CostKind::projection, 4 * m * d * d, attention_params(d), 2 * m * d);
      b.add(block + ".lw.attn", CostKind::attention, 2 * m * thw * d, 0, m * thw * s.heads);
      b.add(block + ".lw.mlp", CostKind::mlp, 8 * m * d * d, mlp_params(d), 6 * m * d);
      if (j == 0) b.add(stage + ".peg", CostKind::conv, m * d * kPegExtent.volume(), d * kPegExtent.volume() + d, m * d);
      Count pyr_params = 0;
      for (const PyramidScale& sc : s.pyramid.scales) {
        const PyramidGeometry g = pyramid_geometry(sc, map);
        pyr_params += d * g.temporal.volume() + d + d * g.spatial.volume() + d;
      }
      // Q and output projections run over M tokens, K and V over the S priors.
      b.add(block + ".gp.proj", CostKind::projection, 2 * m * d * d + 2 * prior_count * d * d, attention_params(d),
            2 * m * d);
      b.add(block + ".gp.pyramid", CostKind::conv, cost_gp(s.pyramid, map, d).conv_exact, pyr_params, 0);
      b.add(block + ".gp.attn", CostKind::attention, 2 * m * prior_count * d, 0, m * prior_count * s.heads);
      b.add(block + ".gp.mlp", CostKind::mlp, 8 * m * d * d, mlp_params(d), 6 * m * d);
    }
    cin = d;
  }
  const Count c_last = cfg.stages.back().channels, classes = cfg.num_classes;
  b.add("head", CostKind::head, c_last * classes, c_last * classes + classes, maps.back().volume() * c_last);
  return b.terms;
}

inline std::vector<StageAnalytic> analytic_attention(const ModelConfig& cfg) {
  const std::vector<Extent3> maps = stage_maps(cfg);
  std::vector<StageAnalytic> out;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& s = cfg.stages[i];
    StageAnalytic a;
    a.stage = i + 1;
    a.map = maps[i];
    a.window = s.window;
    a.tokens = maps[i].volume();
    a.width = s.channels;
    a.priors = s.pyramid.prior_count(maps[i]);
    a.scales = s.pyramid.scale_count();
    a.blocks = s.blocks;
    a.lw = cost_lw(s.window.t, s.window.h, s.window.w, a.tokens, a.width);
    a.gp = cost_gp(s.pyramid, maps[i], a.width);
    a.full = cost_full(a.tokens, a.width);
    out.push_back(a);
  }
  return out;
}

}  // namespace detail

/// Config with its input extent replaced.
inline ModelConfig with_input(ModelConfig cfg, Extent3 input) {
  cfg.input = input;
  return cfg;
}

/// Parameter count per layer group, from shapes alone.
inline CostReport count_params(const ModelConfig& cfg) {
  CostReport r;
  r.terms = detail::analytic_terms(cfg);
  for (auto& t : r.terms) t.macs = t.elementwise = 0;
  finalize(r);
  return r;
}

/// Itemized MAC counts from shapes, plus the closed-form attention section.
inline CostReport count_macs(const ModelConfig& cfg) {
  CostReport r;
  r.terms = detail::analytic_terms(cfg);
  r.analytic = detail::analytic_attention(cfg);
  finalize(r);
  return r;
}

inline CostReport count_macs(const ModelConfig& cfg, Extent3 input) { return count_macs(with_input(cfg, input)); }

/// count_macs plus, per stage, full attention against LW + factorized GP.
inline CostReport compare_report(const ModelConfig& cfg) {
  CostReport r = count_macs(cfg);
  for (const StageAnalytic& a : r.analytic) {
    StageComparison c;
    c.stage = a.stage;
    c.full = a.full;
    c.dual = a.lw + a.gp.factorized;
    c.full_over_dual = static_cast<double>(c.full) / static_cast<double>(c.dual);
    c.full_over_gp = static_cast<double>(c.full) / static_cast<double>(a.gp.factorized);
    c.tokens_over_priors = static_cast<double>(a.tokens) / static_cast<double>(a.priors);
    c.flagged = c.full_over_dual <= 1.0;
    r.comparisons.push_back(c);
  }
  return r;
}

inline CostReport compare_report(const ModelConfig& cfg, Extent3 input) { return compare_report(with_input(cfg, input)); }

/// Report label that owns a named parameter.
inline std::string term_label_for_parameter(const std::string& name) {
  const auto last_dot = name.rfind('.');
  std::string owner = name.substr(0, last_dot);  // drop weight/bias/gain/shift
  if (owner == "patch_embed" || owner == "head" || owner.ends_with(".merge") || owner.ends_with(".peg")) return owner;
  if (const auto p = owner.find(".gp.pyramid"); p != std::string::npos) return owner.substr(0, p) + ".gp.pyramid";
  const auto sub = owner.rfind('.');
  const std::string layer = owner.substr(sub + 1), parent = owner.substr(0, sub);
  if (layer == "ln2" || layer == "mlp_in" || layer == "mlp_out") return parent + ".mlp";
  return parent + ".proj";
}

/// Runs the forward pass with a private counter. MACs and elementwise counts
/// come from the kernels that actually executed; parameter counts come from
/// the materialized state.
template <class T>
CostReport instrument_forward(const Tensor<T>& clip, const ModelConfig& cfg, const ModelState<T>& st,
                              unsigned threads = 1) {
  MacCounter counter;
  ExecContext ctx{&counter, threads, {}};
  forward(clip, cfg, st, ctx);
  CostReport r;
  r.terms = counter.terms();
  for_each_parameter(
      [&](const std::string& name, ParamRole, const Tensor<T>& t) {
        const std::string label = term_label_for_parameter(name);
        for (auto& term : r.terms) {
          if (term.label == label) {
            term.params += t.size();
            return;
          }
        }
        throw ConfigError("instrument_forward: parameter " + name + " has no executed layer");
      },
      st);
  r.analytic = detail::analytic_attention(cfg);
  finalize(r);
  return r;
}

/// Per-stage subtotal of the attention mechanism itself: score and weighted-sum
/// products of both sub-layers plus the pyramid convolutions.
inline Count attention_subtotal(const CostReport& r, std::size_t stage) {
  const std::string prefix = "stage" + std::to_string(stage) + ".block";
  Count n = 0;
  for (const auto& t : r.terms) {
    if (t.label.rfind(prefix, 0) != 0) continue;
    if (t.label.ends_with(".attn") || t.label.ends_with(".gp.pyramid")) n += t.macs;
  }
  return n;
}

}  // namespace dualformer
