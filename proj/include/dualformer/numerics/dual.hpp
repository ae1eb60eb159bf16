#pragma once

#include <cmath>
#include <numbers>
#include <ostream>
#include <type_traits>

namespace dualformer {

/// Forward-mode dual number: value plus one directional derivative.
///
/// Every kernel in the library is a template over its scalar type, so running
/// a forward pass with `Dual<double>` and a single seeded coordinate yields the
/// exact derivative of the output with respect to that coordinate. Comparisons
/// look at the value part only.
template <class T>
struct Dual {
  T v{};
  T d{};

  constexpr Dual() = default;
  constexpr Dual(T value) : v(value) {}  // NOLINT: implicit lift from scalars
  constexpr Dual(T value, T deriv) : v(value), d(deriv) {}

  constexpr Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v /= o.v;
    return *this;
  }

  friend constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend constexpr Dual operator/(Dual a, const Dual& b) { return a /= b; }
  friend constexpr Dual operator-(const Dual& a) { return {-a.v, -a.d}; }

  friend constexpr bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend constexpr bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend constexpr bool operator==(const Dual& a, const Dual& b) { return a.v == b.v && a.d == b.d; }

  friend std::ostream& operator<<(std::ostream& os, const Dual& a) {
    return os << a.v << "+" << a.d << "e";
  }
};

template <class T>
Dual<T> exp(const Dual<T>& a) {
  const T e = std::exp(a.v);
  return {e, e * a.d};
}

template <class T>
Dual<T> log(const Dual<T>& a) {
  return {std::log(a.v), a.d / a.v};
}

template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  const T s = std::sqrt(a.v);
  return {s, a.d / (T(2) * s)};
}

template <class T>
Dual<T> erf(const Dual<T>& a) {
  const T slope = T(2) / std::sqrt(std::numbers::pi_v<T>) * std::exp(-a.v * a.v);
  return {std::erf(a.v), slope * a.d};
}

template <class T>
bool isfinite(const Dual<T>& a) {
  return std::isfinite(a.v) && std::isfinite(a.d);
}

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// The plain-number part of a scalar.
template <class T>
constexpr auto value_of(const T& x) {
  if constexpr (is_dual<T>::value) {
    return x.v;
  } else {
    return x;
  }
}

/// The derivative part of a scalar (zero for plain numbers).
template <class T>
constexpr auto derivative_of(const T& x) {
  if constexpr (is_dual<T>::value) {
    return x.d;
  } else {
    return T{};
  }
}

}  // namespace dualformer
