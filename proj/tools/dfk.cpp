// dfk: command-line front end for the dualformer library.
//
// Exit codes: 0 success, 1 check failure, 2 configuration or input error,
// 3 numeric error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualformer.hpp"

namespace df = dualformer;
using nlohmann::json;

namespace {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kBadInput = 2, kNumeric = 3 };

struct Options {
  std::string preset;
  std::string config_path;
  std::string input;
  std::size_t classes = 0;
  std::uint64_t seed = 1;
  std::string format = "table";
  std::string output;
  unsigned threads = 0;

  // forward
  std::string weights;
  bool static_clip = false;
  // checks
  double eps = df::kFiniteDiffEps;
  std::size_t coords = 20;
  std::size_t trials = 100;
  bool inject_fault = false;
  // bench
  std::string ladder = "4x8x8,8x16x16,8x28x28";
  std::string window = "2x4x4";
  std::size_t width = 32;
  std::size_t heads = 1;
  std::size_t repeat = 3;
  // inflate
  std::string in_dir;
  std::string out_dir;
  std::size_t t_extent = 0;
};

df::Extent3 parse_extent(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    std::size_t pos = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != part.size() || part.empty() || n == 0) throw df::ConfigError("bad extent '" + text + "' (want TxHxW)");
    v.push_back(n);
  }
  if (v.size() != 3) throw df::ConfigError("bad extent '" + text + "' (want TxHxW)");
  return {v[0], v[1], v[2]};
}

std::vector<df::Extent3> parse_ladder(const std::string& text) {
  std::vector<df::Extent3> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_extent(part));
  if (out.empty()) throw df::ConfigError("empty ladder");
  return out;
}

df::ModelConfig resolve_config(const Options& o, const std::string& fallback) {
  df::ModelConfig cfg;
  if (!o.config_path.empty()) {
    cfg = df::load_config_file(o.config_path);
  } else {
    cfg = df::named_config(o.preset.empty() ? fallback : o.preset);
  }
  if (!o.input.empty()) cfg.input = parse_extent(o.input);
  if (o.classes != 0) cfg.num_classes = o.classes;
  df::validate(cfg);
  return cfg;
}

unsigned thread_count(const Options& o) { return o.threads != 0 ? o.threads : df::threads_from_env(); }

void emit(const Options& o, const std::string& text) {
  if (o.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(o.output);
  if (!os) throw df::FormatError("cannot write " + o.output);
  os << text;
}

std::string pyramid_string(const df::PyramidSpec& spec, df::Extent3 map) {
  std::string s;
  for (const auto& sc : spec.scales) {
    if (!s.empty()) s += "+";
    s += sc.is_whole() ? "WHOLE" + map.str() : sc.str();
  }
  return s;
}

// ---------------------------------------------------------------------------

int cmd_describe(const Options& o) {
  const df::ModelConfig cfg = resolve_config(o, "tiny");
  const auto maps = df::stage_maps(cfg);
  json stages = json::array();
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& s = cfg.stages[i];
    const df::WindowGrid grid(maps[i], s.window);
    stages.push_back({{"stage", i + 1},
                      {"map", df::extent_json(maps[i])},
                      {"M", maps[i].volume()},
                      {"channels", s.channels},
                      {"heads", s.heads},
                      {"head_dim", s.head_dim()},
                      {"blocks", s.blocks},
                      {"merge", df::extent_json(s.merge)},
                      {"window", df::extent_json(s.window)},
                      {"windows", grid.window_count()},
                      {"pyramid", pyramid_string(s.pyramid, maps[i])},
                      {"S", s.pyramid.prior_count(maps[i])}});
  }
  if (o.format == "json") {
    emit(o, json{{"config", df::config_to_json(cfg)}, {"stages", stages}}.dump(2) + "\n");
    return kOk;
  }
  std::ostringstream os;
  if (o.format == "csv") {
    os << "stage,map,M,channels,heads,blocks,merge,window,windows,pyramid,S\n";
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
      const auto& s = cfg.stages[i];
      const json& r = stages[i];
      os << i + 1 << ",\"" << maps[i].str() << "\"," << r["M"] << ',' << s.channels << ',' << s.heads << ','
         << s.blocks << ",\"" << s.merge.str() << "\",\"" << s.window.str() << "\"," << r["windows"] << ",\""
         << pyramid_string(s.pyramid, maps[i]) << "\"," << r["S"] << '\n';
    }
    emit(o, os.str());
    return kOk;
  }
  os << "config " << cfg.name << "  input " << cfg.input.str() << "x3  classes " << cfg.num_classes << '\n';
  os << std::left << std::setw(7) << "stage" << std::setw(14) << "map" << std::setw(8) << "M" << std::setw(7) << "C"
     << std::setw(7) << "heads" << std::setw(8) << "blocks" << std::setw(10) << "merge" << std::setw(10) << "window"
     << std::setw(9) << "windows" << std::setw(26) << "pyramid"
     << "S\n";
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const auto& s = cfg.stages[i];
    os << std::setw(7) << i + 1 << std::setw(14) << maps[i].str() << std::setw(8) << maps[i].volume() << std::setw(7)
       << s.channels << std::setw(7) << s.heads << std::setw(8) << s.blocks << std::setw(10) << s.merge.str()
       << std::setw(10) << s.window.str() << std::setw(9) << stages[i]["windows"].get<std::size_t>() << std::setw(26)
       << pyramid_string(s.pyramid, maps[i]) << s.pyramid.prior_count(maps[i]) << '\n';
  }
  emit(o, os.str());
  return kOk;
}

void emit_report(const Options& o, const df::CostReport& r) {
  if (o.format == "json") {
    emit(o, df::to_json(r).dump(2) + "\n");
  } else if (o.format == "csv") {
    emit(o, df::to_csv(r));
  } else {
    emit(o, df::to_table(r));
  }
}

int cmd_params(const Options& o) {
  emit_report(o, df::count_params(resolve_config(o, "tiny")));
  return kOk;
}

int cmd_flops(const Options& o) {
  emit_report(o, df::compare_report(resolve_config(o, "tiny")));
  return kOk;
}

// ---------------------------------------------------------------------------

df::Tensor<double> synthetic_clip(const df::ModelConfig& cfg, std::uint64_t seed, bool static_clip) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  df::Tensor<double> clip({cfg.input.t, cfg.input.h, cfg.input.w, df::kInputChannels});
  const std::size_t frame = clip.size() / cfg.input.t;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    clip[i] = static_clip && i >= frame ? clip[i % frame] : u(rng);
  }
  return clip;
}

int cmd_forward(const Options& o) {
  const df::ModelConfig cfg = resolve_config(o, "micro");
  const df::ModelState<double> st =
      o.weights.empty() ? df::init_random(cfg, o.seed) : df::load_weights(o.weights, cfg);
  const df::Tensor<double> clip = synthetic_clip(cfg, o.seed, o.static_clip);
  df::ExecContext ctx;
  ctx.threads = thread_count(o);
  std::vector<df::Extent3> maps;
  const auto t0 = std::chrono::steady_clock::now();
  const df::Logits<double> logits = df::forward(clip, cfg, st, ctx, &maps);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto v = logits.values.values();
  const double n = static_cast<double>(v.size());
  double mean = 0, var = 0;
  for (double x : v) mean += x;
  mean /= n;
  for (double x : v) var += (x - mean) * (x - mean);
  const double stddev = std::sqrt(var / n);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << df::checksum(logits.values);
  if (!o.output.empty()) df::save_tensor(o.output, logits.values);

  json stage_maps = json::array();
  for (const auto& m : maps) stage_maps.push_back(df::extent_json(m));
  if (o.format == "json") {
    const json j{{"config", cfg.name}, {"logits", v.size()},   {"mean", mean},       {"std", stddev},
                 {"min", *lo},         {"max", *hi},            {"checksum", hex.str()}, {"stage_maps", stage_maps},
                 {"seconds", seconds}};
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  std::cout << "config    " << cfg.name << '\n';
  std::cout << "maps     ";
  for (const auto& m : maps) std::cout << ' ' << m.str();
  std::cout << '\n' << std::setprecision(9);
  std::cout << "logits    " << v.size() << '\n';
  std::cout << "mean      " << mean << '\n';
  std::cout << "std       " << stddev << '\n';
  std::cout << "min       " << *lo << '\n';
  std::cout << "max       " << *hi << '\n';
  std::cout << "checksum  " << hex.str() << '\n';
  std::cout << "seconds   " << std::setprecision(3) << seconds << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

int report_checks(const Options& o, const std::vector<df::checks::CheckResult>& results) {
  bool ok = true;
  json rows = json::array();
  std::ostringstream os;
  os << std::left << std::setw(50) << "check" << std::setw(14) << "max error" << std::setw(12) << "tolerance"
     << std::setw(9) << "samples"
     << "result\n";
  for (const auto& r : results) {
    ok = ok && r.passed();
    rows.push_back({{"check", r.name},
                    {"max_error", r.max_error},
                    {"tolerance", r.tolerance},
                    {"samples", r.samples},
                    {"seed", r.seed},
                    {"passed", r.passed()}});
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.max_error;
    std::ostringstream tol;
    tol << std::scientific << std::setprecision(0) << r.tolerance;
    os << std::setw(50) << r.name << std::setw(14) << err.str() << std::setw(12) << tol.str() << std::setw(9)
       << r.samples << (r.passed() ? "PASS" : "FAIL") << '\n';
  }
  emit(o, o.format == "json" ? json{{"passed", ok}, {"checks", rows}}.dump(2) + "\n" : os.str());
  for (const auto& r : results) {
    if (!r.passed()) std::cerr << "check failed: " << r.name << " (seed " << r.seed << ")\n";
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_gradcheck(const Options& o) {
  const df::ModelConfig cfg = resolve_config(o, "micro");
  if (!(o.eps > 0.0)) throw df::ConfigError("--eps must be positive");
  df::checks::SuiteOptions so;
  so.seed = o.seed;
  so.coords = o.coords;
  so.eps = o.eps;
  so.fault = o.inject_fault ? 1e-2 : 0.0;
  return report_checks(o, df::checks::run_gradient_suite(so, cfg));
}

int cmd_oracle_check(const Options& o) {
  df::checks::SuiteOptions so;
  so.seed = o.seed;
  so.trials = o.trials;
  so.fault = o.inject_fault ? 1e-6 : 0.0;
  return report_checks(o, df::checks::run_oracle_suite(so));
}

// ---------------------------------------------------------------------------

struct Timing {
  double min = 0;
  double median = 0;
};

template <class F>
Timing time_it(std::size_t repeat, F&& f) {
  std::vector<double> s;
  for (std::size_t i = 0; i < repeat; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return {s.front(), n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2])};
}

// Measured attention columns charge both the score and the value product;
// the analytic lw/gp/full columns count the score product only.
int cmd_bench(const Options& o) {
  const auto ladder = parse_ladder(o.ladder);
  const df::Extent3 window = parse_extent(o.window);
  if (o.repeat == 0 || o.width == 0 || o.heads == 0 || o.width % o.heads != 0) {
    throw df::ConfigError("bench: need --repeat >= 1 and --heads dividing --width");
  }
  const df::PyramidSpec spec{{df::PyramidScale::of(1, 1, 1), df::PyramidScale::of(2, 2, 2)}};
  std::mt19937_64 rng(o.seed);
  json rows = json::array();
  for (const df::Extent3& map : ladder) {
    const df::WindowGrid grid(map, window);
    spec.validate(map);
    const auto p = df::checks::random_attention(o.width, o.heads, rng);
    const auto kernels = df::averaging_pyramid_kernels<double>(spec, map, o.width);
    const auto x = df::checks::random_tensor({map.t, map.h, map.w, o.width}, rng);
    const auto rows_x = df::checks::rows_of(x);
    const auto dual = [&](const df::ExecContext& ctx) {
      const auto local = df::lw_attention_core(x, grid, p, ctx.nested("lw"));
      const df::ExecContext gp = ctx.nested("gp");
      df::GlobalPriors<double> priors;
      {
        auto scope = gp.scope("pyramid", df::CostKind::conv);
        priors = df::pyramid_downsample(x, spec, kernels, gp);
      }
      return df::multi_head_attention(rows_x, priors.tokens, p, gp);
    };
    df::MacCounter counter;
    dual(df::ExecContext{&counter, 1, {}});
    df::Count lw_attn = 0, gp_attn = 0, pyramid = 0;
    for (const auto& t : counter.terms()) {
      if (t.label == "lw.attn") lw_attn += t.macs;
      if (t.label == "gp.attn") gp_attn += t.macs;
      if (t.label == "gp.pyramid") pyramid += t.macs;
    }
    const Timing td = time_it(o.repeat, [&] { dual(df::ExecContext{}); });
    const Timing tf = time_it(o.repeat, [&] { df::oracle::full_attention_ref(rows_x, rows_x, rows_x); });
    const std::size_t m = map.volume();
    const df::Count lw = df::cost_lw(window.t, window.h, window.w, m, o.width);
    const df::GpCost gp_cost = df::cost_gp(spec, map, o.width);
    const df::Count gp = gp_cost.factorized;
    const df::Count full = df::cost_full(m, o.width);
    rows.push_back({{"map", df::extent_json(map)},
                    {"M", m},
                    {"dual_min_s", td.min},
                    {"dual_median_s", td.median},
                    {"full_min_s", tf.min},
                    {"full_median_s", tf.median},
                    {"time_ratio", tf.median / td.median},
                    {"lw_attn_measured", lw_attn},
                    {"gp_attn_measured", gp_attn},
                    {"pyramid_measured", pyramid},
                    {"lw_macs", lw},
                    {"gp_macs", gp},
                    {"pyramid_macs", gp_cost.conv_exact},
                    {"full_macs", full},
                    {"analytic_ratio", static_cast<double>(full) / static_cast<double>(lw + gp)}});
  }
  if (o.format == "json") {
    emit(o, json{{"width", o.width}, {"heads", o.heads}, {"window", df::extent_json(window)}, {"repeat", o.repeat},
                 {"rows", rows}}
                    .dump(2) +
                "\n");
    return kOk;
  }
  std::ostringstream os;
  const bool csv = o.format == "csv";
  const std::vector<std::string> cols{"map",           "M",          "dual_min_s",       "dual_median_s",
                                      "full_min_s",    "full_median_s", "time_ratio",     "lw_attn_measured",
                                      "gp_attn_measured", "pyramid_measured", "lw_macs",   "gp_macs",
                                      "pyramid_macs",  "full_macs",  "analytic_ratio"};
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (csv) {
      os << (c ? "," : "") << cols[c];
    } else {
      os << std::left << std::setw(c == 0 ? 12 : 18) << cols[c];
    }
  }
  os << '\n';
  for (const auto& r : rows) {
    const auto map = r["map"];
    const std::string mstr =
        "(" + map[0].dump() + "," + map[1].dump() + "," + map[2].dump() + ")";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      std::ostringstream cell;
      if (c == 0) {
        cell << (csv ? "\"" + mstr + "\"" : mstr);
      } else if (r[cols[c]].is_number_float()) {
        cell << std::setprecision(5) << r[cols[c]].get<double>();
      } else {
        cell << r[cols[c]].dump();
      }
      if (csv) {
        os << (c ? "," : "") << cell.str();
      } else {
        os << std::left << std::setw(c == 0 ? 12 : 18) << cell.str();
      }
    }
    os << '\n';
  }
  emit(o, os.str());
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_inflate(const Options& o) {
  if (o.t_extent == 0) throw df::ConfigError("inflate: --t must be >= 1");
  const df::Manifest in = df::read_manifest(o.in_dir);
  std::filesystem::create_directories(o.out_dir);
  df::Manifest out;
  std::size_t inflated = 0;
  for (const auto& e : in.tensors) {
    const std::filesystem::path src = std::filesystem::path(o.in_dir) / e.file;
    if (!std::filesystem::exists(src)) throw df::FormatError("inflate: missing tensor file " + src.string());
    df::Tensor<double> t = df::load_tensor<double>(src);
    df::ManifestEntry entry = e;
    if (e.kind == "conv2d") {
      t = df::inflate_2d(t, o.t_extent);
      entry.kind = "conv3d";
      ++inflated;
    } else if (e.kind == "depthwise2d") {
      t = df::inflate_depthwise_2d(t, o.t_extent);
      entry.kind = "depthwise3d";
      ++inflated;
    }
    entry.shape = t.shape();
    df::save_tensor(std::filesystem::path(o.out_dir) / entry.file, t);
    out.tensors.push_back(entry);
  }
  df::write_manifest(o.out_dir, out);
  std::cout << "inflated " << inflated << " of " << in.tensors.size() << " tensors (t=" << o.t_extent << ") into "
            << o.out_dir << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

void add_config_options(CLI::App* sub, Options& o) {
  sub->add_option("--preset", o.preset, "tiny, small, base or micro");
  sub->add_option("--config", o.config_path, "JSON configuration file")->excludes("--preset");
  sub->add_option("--input", o.input, "input extent TxHxW");
  sub->add_option("--classes", o.classes, "number of classes");
}

void add_output_options(CLI::App* sub, Options& o) {
  sub->add_option("--format", o.format, "table, json or csv")
      ->check(CLI::IsMember({"table", "json", "csv"}));
  sub->add_option("--output", o.output, "write to a file instead of stdout");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dfk: dual-level space-time attention toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* describe = app.add_subcommand("describe", "per-stage maps, windows and pyramids");
  add_config_options(describe, o);
  add_output_options(describe, o);

  auto* params = app.add_subcommand("params", "parameter counts");
  add_config_options(params, o);
  add_output_options(params, o);

  auto* flops = app.add_subcommand("flops", "multiply-accumulate counts and attention cost comparison");
  add_config_options(flops, o);
  add_output_options(flops, o);

  auto* forward = app.add_subcommand("forward", "forward pass on a synthetic clip");
  add_config_options(forward, o);
  forward->add_option("--seed", o.seed, "seed for weights and clip");
  forward->add_option("--weights", o.weights, "weights directory (manifest.json)");
  forward->add_flag("--static", o.static_clip, "repeat the first frame over time");
  forward->add_option("--threads", o.threads, "worker threads (default: DFK_THREADS or 1)");
  forward->add_option("--format", o.format, "table or json")->check(CLI::IsMember({"table", "json"}));
  forward->add_option("--output", o.output, "write the logits tensor to this file");

  auto* gradcheck = app.add_subcommand("gradcheck", "dual-number gradients against finite differences");
  add_config_options(gradcheck, o);
  add_output_options(gradcheck, o);
  gradcheck->add_option("--seed", o.seed, "suite seed");
  gradcheck->add_option("--eps", o.eps, "finite-difference step");
  gradcheck->add_option("--coords", o.coords, "coordinates per check");
  gradcheck->add_flag("--inject-fault", o.inject_fault, "perturb the implementation side (harness test)");

  auto* oracle = app.add_subcommand("oracle-check", "fast kernels against the reference implementations");
  add_output_options(oracle, o);
  oracle->add_option("--seed", o.seed, "suite seed");
  oracle->add_option("--trials", o.trials, "random instances per check");
  oracle->add_flag("--inject-fault", o.inject_fault, "perturb the implementation side (harness test)");

  auto* bench = app.add_subcommand("bench", "time dual-level attention against full attention");
  add_output_options(bench, o);
  bench->add_option("--ladder", o.ladder, "comma-separated TxHxW map extents");
  bench->add_option("--window", o.window, "local window TxHxW");
  bench->add_option("--width", o.width, "channels");
  bench->add_option("--heads", o.heads, "attention heads");
  bench->add_option("--repeat", o.repeat, "timed runs per point");
  bench->add_option("--seed", o.seed, "seed for inputs and weights");

  auto* inflate = app.add_subcommand("inflate", "inflate 2D kernels of a weights directory to 3D");
  inflate->add_option("--in", o.in_dir, "source weights directory")->required();
  inflate->add_option("--out", o.out_dir, "destination directory")->required();
  inflate->add_option("--t", o.t_extent, "temporal extent")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kBadInput;
  }

  try {
    if (*describe) return cmd_describe(o);
    if (*params) return cmd_params(o);
    if (*flops) return cmd_flops(o);
    if (*forward) return cmd_forward(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*oracle) return cmd_oracle_check(o);
    if (*bench) return cmd_bench(o);
    if (*inflate) return cmd_inflate(o);
  } catch (const df::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const df::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  }
  return kBadInput;
}
