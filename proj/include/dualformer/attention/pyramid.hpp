#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/exec.hpp"
#include "dualformer/numerics/extent.hpp"
#include "dualformer/numerics/ops.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

/// One pyramid level: a prior grid (k1, k2, k3), or WHOLE, meaning the grid
/// equals whatever map it is applied to.
struct PyramidScale {
  std::optional<Extent3> grid;

  static PyramidScale whole() { return {}; }
  static PyramidScale of(std::size_t k1, std::size_t k2, std::size_t k3) { return {Extent3{k1, k2, k3}}; }

  bool is_whole() const { return !grid.has_value(); }
  Extent3 resolve(Extent3 map) const { return grid.value_or(map); }
  std::string str() const { return grid ? grid->str() : "WHOLE"; }

  friend bool operator==(const PyramidScale&, const PyramidScale&) = default;
};

/// Ordered list of pyramid scales for one GP-MSA sub-layer.
struct PyramidSpec {
  std::vector<PyramidScale> scales;

  std::size_t scale_count() const { return scales.size(); }

  /// Throws unless every (resolved) scale divides the map.
  void validate(Extent3 map) const {
    if (scales.empty()) throw ConfigError("pyramid: at least one scale is required");
    for (const PyramidScale& s : scales) {
      const Extent3 g = s.resolve(map);
      const char* axes[] = {"time", "height", "width"};
      const std::size_t gk[] = {g.t, g.h, g.w};
      const std::size_t mk[] = {map.t, map.h, map.w};
      for (int a = 0; a < 3; ++a) {
        if (gk[a] == 0 || gk[a] > mk[a] || mk[a] % gk[a] != 0) {
          throw ShapeError("pyramid: scale " + s.str() + " " + axes[a] + " extent " + std::to_string(gk[a]) +
                           " does not divide map extent " + std::to_string(mk[a]));
        }
      }
    }
  }

  /// S: total number of prior tokens on a map of the given extent.
  std::size_t prior_count(Extent3 map) const {
    std::size_t s = 0;
    for (const PyramidScale& sc : scales) s += sc.resolve(map).volume();
    return s;
  }

  friend bool operator==(const PyramidSpec&, const PyramidSpec&) = default;
};

/// Factorized depth-wise kernel pair for one scale: a temporal pass followed
/// by a spatial pass, each with extent == stride.
template <class T>
struct PyramidLevel {
  ConvKernel3D<T> temporal;
  ConvKernel3D<T> spatial;
};

template <class T>
using PyramidKernels = std::vector<PyramidLevel<T>>;

/// Non-overlapping region extents for one scale: (T'/k1, 1, 1) then (1, H'/k2, W'/k3).
struct PyramidGeometry {
  Extent3 temporal;
  Extent3 spatial;
};

inline PyramidGeometry pyramid_geometry(const PyramidScale& scale, Extent3 map) {
  const Extent3 region = map / scale.resolve(map);
  return {{region.t, 1, 1}, {1, region.h, region.w}};
}

/// Zero-valued kernels with the right geometry (biases included).
template <class T>
PyramidKernels<T> zero_pyramid_kernels(const PyramidSpec& spec, Extent3 map, std::size_t channels) {
  spec.validate(map);
  PyramidKernels<T> out;
  for (const PyramidScale& s : spec.scales) {
    const PyramidGeometry g = pyramid_geometry(s, map);
    out.push_back({ConvKernel3D<T>::zeros(g.temporal, g.temporal, channels, true),
                   ConvKernel3D<T>::zeros(g.spatial, g.spatial, channels, true)});
  }
  return out;
}

/// Kernels whose two passes each average their region, so the composition is
/// adaptive average pooling.
template <class T>
PyramidKernels<T> averaging_pyramid_kernels(const PyramidSpec& spec, Extent3 map, std::size_t channels) {
  PyramidKernels<T> out = zero_pyramid_kernels<T>(spec, map, channels);
  for (PyramidLevel<T>& lvl : out) {
    for (T& w : lvl.temporal.weights.values()) w = T(1.0 / static_cast<double>(lvl.temporal.extent.volume()));
    for (T& w : lvl.spatial.weights.values()) w = T(1.0 / static_cast<double>(lvl.spatial.extent.volume()));
  }
  return out;
}

/// Concatenated priors (S x D) plus the first row of each scale's block.
template <class T>
struct GlobalPriors {
  Tensor<T> tokens;
  std::vector<std::size_t> offsets;
};

/// Builds multi-scale global priors from a (T', H', W', D) map.
template <class T>
GlobalPriors<T> pyramid_downsample(const Tensor<T>& x, const PyramidSpec& spec, const PyramidKernels<T>& kernels,
                                   const ExecContext& ctx = {}) {
  if (x.rank() != 4) throw ShapeError("pyramid_downsample: expected (T,H,W,D), got " + shape_string(x.shape()));
  const Extent3 map{x.extent(0), x.extent(1), x.extent(2)};
  const std::size_t d = x.extent(3);
  spec.validate(map);
  if (kernels.size() != spec.scale_count()) {
    throw ConfigError("pyramid_downsample: " + std::to_string(kernels.size()) + " kernel pairs for " +
                      std::to_string(spec.scale_count()) + " scales");
  }
  GlobalPriors<T> out{Tensor<T>({spec.prior_count(map), d}), {}};
  std::size_t row = 0;
  for (std::size_t i = 0; i < spec.scale_count(); ++i) {
    const PyramidGeometry g = pyramid_geometry(spec.scales[i], map);
    const PyramidLevel<T>& lvl = kernels[i];
    if (lvl.temporal.extent != g.temporal || lvl.temporal.stride != g.temporal || lvl.spatial.extent != g.spatial ||
        lvl.spatial.stride != g.spatial) {
      throw ShapeError("pyramid_downsample: kernels for scale " + spec.scales[i].str() +
                       " do not match region geometry on map " + map.str());
    }
    const Tensor<T> temporal = depthwise_conv3d(x, lvl.temporal, {0, 0, 0}, ctx);
    const Tensor<T> pooled = depthwise_conv3d(temporal, lvl.spatial, {0, 0, 0}, ctx);
    out.offsets.push_back(row);
    std::copy(pooled.values().begin(), pooled.values().end(), out.tokens.data() + row * d);
    row += pooled.size() / d;
  }
  return out;
}

}  // namespace dualformer
