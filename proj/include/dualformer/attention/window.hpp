#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/extent.hpp"
#include "dualformer/numerics/tensor.hpp"

namespace dualformer {

/// Partition of a (T', H', W') token map into non-overlapping (t, h, w)
/// windows. Window extents must divide the map extents exactly.
class WindowGrid {
 public:
  WindowGrid(Extent3 map, Extent3 window) : map_(map), window_(window) {
    check_axis("time", map.t, window.t);
    check_axis("height", map.h, window.h);
    check_axis("width", map.w, window.w);
  }

  Extent3 map_extent() const { return map_; }
  Extent3 window_extent() const { return window_; }
  Extent3 windows_per_axis() const { return map_ / window_; }
  std::size_t window_count() const { return windows_per_axis().volume(); }
  std::size_t tokens_per_window() const { return window_.volume(); }
  std::size_t token_count() const { return map_.volume(); }

  /// Raster index of the window that holds map position (t, h, w).
  std::size_t window_of(std::size_t t, std::size_t h, std::size_t w) const {
    const Extent3 n = windows_per_axis();
    return ((t / window_.t) * n.h + h / window_.h) * n.w + w / window_.w;
  }

 private:
  static void check_axis(const char* axis, std::size_t map, std::size_t win) {
    if (win == 0 || map == 0 || map % win != 0) {
      throw ShapeError(std::string("window grid: ") + axis + " window extent " + std::to_string(win) +
                       " does not divide map extent " + std::to_string(map));
    }
  }

  Extent3 map_;
  Extent3 window_;
};

namespace detail {

inline Extent3 map_extent_of(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + ": expected (T,H,W,D), got " + shape_string(s));
  return {s[0], s[1], s[2]};
}

// Calls fn(map_offset, window_index, slot) for every token, where map_offset
// and the window offset are both in tokens.
template <class Fn>
void for_each_window_token(const WindowGrid& grid, Fn&& fn) {
  const Extent3 map = grid.map_extent(), win = grid.window_extent(), n = grid.windows_per_axis();
  for (std::size_t bt = 0; bt < n.t; ++bt)
    for (std::size_t bh = 0; bh < n.h; ++bh)
      for (std::size_t bw = 0; bw < n.w; ++bw) {
        const std::size_t widx = (bt * n.h + bh) * n.w + bw;
        std::size_t slot = 0;
        for (std::size_t lt = 0; lt < win.t; ++lt)
          for (std::size_t lh = 0; lh < win.h; ++lh) {
            const std::size_t t = bt * win.t + lt, h = bh * win.h + lh;
            const std::size_t row = (t * map.h + h) * map.w + bw * win.w;
            for (std::size_t lw = 0; lw < win.w; ++lw) fn(row + lw, widx, slot++);
          }
      }
}

}  // namespace detail

/// (T', H', W', D) -> (nW, t*h*w, D). Windows in raster order of their block
/// index; tokens inside a window in raster order of local position.
template <class T>
Tensor<T> window_partition(const Tensor<T>& x, const WindowGrid& grid) {
  const Extent3 map = detail::map_extent_of(x.shape(), "window_partition");
  if (map != grid.map_extent()) {
    throw ShapeError("window_partition: map " + map.str() + " does not match grid " + grid.map_extent().str());
  }
  const std::size_t d = x.extent(3), per = grid.tokens_per_window();
  Tensor<T> out({grid.window_count(), per, d});
  detail::for_each_window_token(grid, [&](std::size_t src, std::size_t widx, std::size_t slot) {
    std::copy_n(x.data() + src * d, d, out.data() + (widx * per + slot) * d);
  });
  return out;
}

/// Exact inverse of window_partition.
template <class T>
Tensor<T> window_reverse(const Tensor<T>& windows, const WindowGrid& grid) {
  if (windows.rank() != 3 || windows.extent(0) != grid.window_count() ||
      windows.extent(1) != grid.tokens_per_window()) {
    throw ShapeError("window_reverse: windows " + shape_string(windows.shape()) + " inconsistent with " +
                     std::to_string(grid.window_count()) + " windows of " +
                     std::to_string(grid.tokens_per_window()) + " tokens");
  }
  const Extent3 map = grid.map_extent();
  const std::size_t d = windows.extent(2), per = grid.tokens_per_window();
  Tensor<T> out({map.t, map.h, map.w, d});
  detail::for_each_window_token(grid, [&](std::size_t dst, std::size_t widx, std::size_t slot) {
    std::copy_n(windows.data() + (widx * per + slot) * d, d, out.data() + dst * d);
  });
  return out;
}

}  // namespace dualformer
