#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dualformer/attention/pyramid.hpp"
#include "dualformer/attention/window.hpp"
#include "dualformer/errors.hpp"
#include "dualformer/numerics/extent.hpp"

namespace dualformer {

inline constexpr std::size_t kDefaultHeadDim = 32;
inline constexpr std::size_t kInputChannels = 3;

struct StageConfig {
  Extent3 merge;  // patch extent for stage 1, merge rate (r_t, 2, 2) afterwards
  std::size_t channels = 0;
  std::size_t blocks = 1;
  Extent3 window{8, 7, 7};
  PyramidSpec pyramid;
  std::size_t heads = 1;

  std::size_t head_dim() const { return heads == 0 ? 0 : channels / heads; }
  std::size_t temporal_pool_rate() const { return merge.t; }

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct ModelConfig {
  std::string name = "custom";
  Extent3 input{32, 224, 224};
  std::vector<StageConfig> stages;
  std::size_t num_classes = 400;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Token-map extent at the output of each stage's merge/embedding layer.
inline std::vector<Extent3> stage_maps(const ModelConfig& cfg) {
  std::vector<Extent3> maps;
  Extent3 cur = cfg.input;
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const Extent3 m = cfg.stages[i].merge;
    if (!m.divides(cur)) {
      throw ShapeError("stage " + std::to_string(i + 1) + ": merge extent " + m.str() +
                       " does not divide map " + cur.str());
    }
    cur = cur / m;
    maps.push_back(cur);
  }
  return maps;
}

/// Checks every divisibility and width constraint of the configuration.
inline void validate(const ModelConfig& cfg) {
  if (cfg.stages.empty()) throw ConfigError("config: at least one stage is required");
  if (cfg.num_classes == 0) throw ConfigError("config: num_classes must be >= 1");
  if (cfg.input.volume() == 0) throw ConfigError("config: input extents must be >= 1");
  const std::vector<Extent3> maps = stage_maps(cfg);
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    const StageConfig& s = cfg.stages[i];
    const std::string where = "stage " + std::to_string(i + 1) + ": ";
    if (s.channels == 0 || s.blocks == 0) throw ConfigError(where + "channels and blocks must be >= 1");
    if (s.heads == 0 || s.channels % s.heads != 0) {
      throw ConfigError(where + std::to_string(s.channels) + " channels not divisible by " +
                        std::to_string(s.heads) + " heads");
    }
    if (s.merge.volume() == 0) throw ConfigError(where + "merge extent must be >= 1");
    try {
      WindowGrid grid(maps[i], s.window);
      s.pyramid.validate(maps[i]);
    } catch (const Error& e) {
      throw ShapeError(where + e.what());
    }
  }
}

/// Table of the published tiny / small / base configurations.
inline ModelConfig preset(const std::string& name) {
  std::size_t c1 = 0;
  std::vector<std::size_t> blocks;
  if (name == "tiny") {
    c1 = 64;
    blocks = {1, 1, 5, 2};
  } else if (name == "small") {
    c1 = 96;
    blocks = {1, 1, 9, 1};
  } else if (name == "base") {
    c1 = 128;
    blocks = {1, 1, 9, 1};
  } else {
    throw ConfigError("unknown preset '" + name + "' (valid presets: tiny, small, base)");
  }
  const PyramidSpec two_scale{{PyramidScale::of(4, 4, 4), PyramidScale::of(8, 7, 7)}};
  const PyramidSpec pyramids[] = {two_scale, two_scale, PyramidSpec{{PyramidScale::of(8, 7, 7)}},
                                  PyramidSpec{{PyramidScale::whole()}}};
  ModelConfig cfg;
  cfg.name = name;
  for (std::size_t i = 0; i < 4; ++i) {
    StageConfig s;
    s.merge = i == 0 ? Extent3{2, 4, 4} : Extent3{1, 2, 2};
    s.channels = c1 << i;
    s.blocks = blocks[i];
    s.window = {8, 7, 7};
    s.pyramid = pyramids[i];
    s.heads = s.channels / kDefaultHeadDim;
    cfg.stages.push_back(s);
  }
  return cfg;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"tiny", "small", "base"};
  return names;
}

/// Small four-stage network used for gradient and identity checks.
/// Stage maps: (2,8,8) -> (2,4,4) -> (2,2,2) -> (2,1,1).
inline ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.name = "micro";
  cfg.input = {4, 32, 32};
  cfg.num_classes = 10;
  const PyramidSpec two{{PyramidScale::of(1, 1, 1), PyramidScale::of(2, 2, 2)}};
  cfg.stages = {
      {{2, 4, 4}, 8, 1, {2, 4, 4}, two, 2},
      {{1, 2, 2}, 16, 1, {2, 2, 2}, two, 2},
      {{1, 2, 2}, 32, 1, {1, 2, 2}, PyramidSpec{{PyramidScale::of(1, 1, 1)}}, 2},
      {{1, 2, 2}, 64, 1, {2, 1, 1}, PyramidSpec{{PyramidScale::whole()}}, 2},
  };
  return cfg;
}

}  // namespace dualformer
