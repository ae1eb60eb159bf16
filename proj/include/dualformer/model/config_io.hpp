#pragma once

// JSON form of ModelConfig. A document may start from a named configuration
// through "base" and override any field:
//   {"base": "tiny", "input": [16, 224, 224], "num_classes": 174,
//    "stages": [{"merge": [2, 4, 4]}, {}, {"blocks": 3}, {"pyramid": ["WHOLE"]}]}
// The length of "stages" fixes the stage count; entry i is applied on top of
// stage i of the base (or of a default stage when the base has fewer).

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualformer/errors.hpp"
#include "dualformer/model/config.hpp"

namespace dualformer {

inline constexpr const char* kWholeScale = "WHOLE";

/// Presets plus "micro".
inline ModelConfig named_config(const std::string& name) {
  if (name == "micro") return micro_config();
  try {
    return preset(name);
  } catch (const ConfigError&) {
    throw ConfigError("unknown configuration '" + name + "' (valid: tiny, small, base, micro)");
  }
}

inline nlohmann::json extent_json(Extent3 e) { return nlohmann::json::array({e.t, e.h, e.w}); }

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const StageConfig& s : cfg.stages) {
    nlohmann::json pyramid = nlohmann::json::array();
    for (const PyramidScale& sc : s.pyramid.scales) {
      pyramid.push_back(sc.is_whole() ? nlohmann::json(kWholeScale) : extent_json(*sc.grid));
    }
    stages.push_back({{"merge", extent_json(s.merge)},
                      {"channels", s.channels},
                      {"blocks", s.blocks},
                      {"window", extent_json(s.window)},
                      {"pyramid", pyramid},
                      {"heads", s.heads}});
  }
  return {{"name", cfg.name}, {"input", extent_json(cfg.input)}, {"num_classes", cfg.num_classes}, {"stages", stages}};
}

namespace detail {

inline Extent3 extent_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [t, h, w]");
  const auto axis = [&](std::size_t i) {
    if (!j[i].is_number_unsigned() || j[i].get<std::size_t>() == 0) {
      throw ConfigError(where + ": extents must be positive integers");
    }
    return j[i].get<std::size_t>();
  };
  return {axis(0), axis(1), axis(2)};
}

inline std::size_t count_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number_unsigned() || j.get<std::size_t>() == 0) throw ConfigError(where + ": expected a positive integer");
  return j.get<std::size_t>();
}

inline void apply_stage(StageConfig& s, const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string at = where + "." + key;
    if (key == "merge") {
      s.merge = extent_from_json(value, at);
    } else if (key == "window") {
      s.window = extent_from_json(value, at);
    } else if (key == "channels") {
      s.channels = count_from_json(value, at);
    } else if (key == "blocks") {
      s.blocks = count_from_json(value, at);
    } else if (key == "heads") {
      s.heads = count_from_json(value, at);
    } else if (key == "pyramid") {
      if (!value.is_array() || value.empty()) throw ConfigError(at + ": expected a non-empty list of scales");
      s.pyramid.scales.clear();
      for (const auto& sc : value) {
        if (sc.is_string() && sc.get<std::string>() == kWholeScale) {
          s.pyramid.scales.push_back(PyramidScale::whole());
        } else {
          s.pyramid.scales.push_back(PyramidScale{extent_from_json(sc, at)});
        }
      }
    } else {
      throw ConfigError(at + ": unknown field");
    }
  }
}

}  // namespace detail

inline ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ModelConfig cfg;
  if (j.contains("base")) {
    if (!j["base"].is_string()) throw ConfigError("config.base: expected a name");
    cfg = named_config(j["base"].get<std::string>());
  } else {
    cfg.name = "custom";
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "base") continue;
    if (key == "name") {
      if (!value.is_string()) throw ConfigError("config.name: expected a string");
      cfg.name = value.get<std::string>();
    } else if (key == "input") {
      cfg.input = detail::extent_from_json(value, "config.input");
    } else if (key == "num_classes") {
      cfg.num_classes = detail::count_from_json(value, "config.num_classes");
    } else if (key == "stages") {
      if (!value.is_array()) throw ConfigError("config.stages: expected a list");
      std::vector<StageConfig> stages;
      for (std::size_t i = 0; i < value.size(); ++i) {
        StageConfig s = i < cfg.stages.size() ? cfg.stages[i] : StageConfig{};
        detail::apply_stage(s, value[i], "config.stages[" + std::to_string(i) + "]");
        stages.push_back(s);
      }
      cfg.stages = stages;
    } else {
      throw ConfigError("config." + key + ": unknown field");
    }
  }
  validate(cfg);
  return cfg;
}

inline ModelConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

}  // namespace dualformer
