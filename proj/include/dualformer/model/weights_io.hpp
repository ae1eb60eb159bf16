#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualformer/errors.hpp"
#include "dualformer/model/config.hpp"
#include "dualformer/model/state.hpp"
#include "dualformer/numerics/serialize.hpp"

// A weights directory holds manifest.json plus one DFTK container per tensor:
//   {"format": "dualformer-weights", "version": 1,
//    "tensors": [{"name": ..., "shape": [...], "kind": ..., "file": ...}, ...]}
// kind is one of conv3d, conv2d, depthwise3d, depthwise2d, linear, bias, norm.

namespace dualformer {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kManifestFormat = "dualformer-weights";

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::string kind;
  std::string file;
};

struct Manifest {
  std::vector<ManifestEntry> tensors;

  const ManifestEntry* find(const std::string& name) const {
    for (const auto& e : tensors) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

inline std::string parameter_kind(const std::string& name, ParamRole role, const Shape& shape) {
  switch (role) {
    case ParamRole::bias: return "bias";
    case ParamRole::gain:
    case ParamRole::shift: return "norm";
    case ParamRole::weight: break;
  }
  if (name.find(".peg.") != std::string::npos || name.find(".pyramid") != std::string::npos) {
    return shape.size() == 3 ? "depthwise2d" : "depthwise3d";
  }
  if (shape.size() == 5) return "conv3d";
  if (shape.size() == 4) return "conv2d";
  return "linear";
}

inline Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / kManifestFile);
  if (!is) throw FormatError("cannot open " + (dir / kManifestFile).string());
  Manifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(is);
    if (j.at("format").get<std::string>() != kManifestFormat) throw FormatError("unexpected manifest format");
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported manifest version");
    for (const auto& t : j.at("tensors")) {
      m.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(), t.at("kind").get<std::string>(),
                           t.at("file").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : m.tensors) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"kind", e.kind}, {"file", e.file}});
  }
  const nlohmann::json j{{"format", kManifestFormat}, {"version", 1}, {"tensors", tensors}};
  std::ofstream os(dir / kManifestFile);
  if (!os) throw FormatError("cannot write " + (dir / kManifestFile).string());
  os << j.dump(2) << '\n';
}

/// Writes every parameter of the state as f64 containers plus a manifest.
inline void save_weights(const std::filesystem::path& dir, const ModelState<double>& st) {
  std::filesystem::create_directories(dir);
  Manifest m;
  for_each_parameter(
      [&](const std::string& name, ParamRole role, const Tensor<double>& t) {
        const std::string file = name + ".dftk";
        save_tensor(dir / file, t);
        m.tensors.push_back({name, t.shape(), parameter_kind(name, role, t.shape()), file});
      },
      st);
  write_manifest(dir, m);
}

/// Loads a state for `cfg`; every parameter must be present with its exact shape.
inline ModelState<double> load_weights(const std::filesystem::path& dir, const ModelConfig& cfg) {
  const Manifest m = read_manifest(dir);
  ModelState<double> st = allocate_state<double>(cfg);
  for_each_parameter(
      [&](const std::string& name, ParamRole, Tensor<double>& t) {
        const ManifestEntry* e = m.find(name);
        if (e == nullptr) throw FormatError("weights: missing tensor " + name);
        Tensor<double> loaded = load_tensor<double>(dir / e->file);
        if (loaded.shape() != t.shape()) {
          throw FormatError("weights: " + name + " has shape " + shape_string(loaded.shape()) + ", expected " +
                            shape_string(t.shape()));
        }
        t = std::move(loaded);
      },
      st);
  return st;
}

}  // namespace dualformer
