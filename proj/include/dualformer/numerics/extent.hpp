#pragma once

#include <cstddef>
#include <ostream>
#include <sstream>
#include <string>

namespace dualformer {

/// A (time, height, width) triple of counts.
struct Extent3 {
  std::size_t t = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t volume() const { return t * h * w; }

  constexpr bool divides(const Extent3& other) const {
    return t != 0 && h != 0 && w != 0 && other.t % t == 0 && other.h % h == 0 &&
           other.w % w == 0;
  }

  /// Component-wise quotient; caller checks divisibility.
  constexpr Extent3 operator/(const Extent3& d) const { return {t / d.t, h / d.h, w / d.w}; }
  constexpr Extent3 operator*(const Extent3& m) const { return {t * m.t, h * m.h, w * m.w}; }

  friend constexpr bool operator==(const Extent3&, const Extent3&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << t << ',' << h << ',' << w << ')';
    return os.str();
  }
};

inline std::ostream& operator<<(std::ostream& os, const Extent3& e) { return os << e.str(); }

}  // namespace dualformer
