#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "dualformer/errors.hpp"
#include "dualformer/numerics/tensor.hpp"

// Binary tensor container:
//   magic "DFTK" | version u32 | rank u32 | extents u64[rank] | dtype u32 | data
// All integers and values little-endian, data row-major.

namespace dualformer {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

inline constexpr std::array<char, 4> kTensorMagic{'D', 'F', 'T', 'K'};
inline constexpr std::uint32_t kTensorVersion = 1;

enum class DType : std::uint32_t { f64 = 0, f32 = 1 };

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, double> || std::is_same_v<T, float>, "serializable scalars are f64/f32");
  return std::is_same_v<T, double> ? DType::f64 : DType::f32;
}

namespace detail {

template <class I>
void put(std::ostream& os, I v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class I>
I get(std::istream& is) {
  I v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) throw FormatError("tensor container truncated");
  return v;
}

}  // namespace detail

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& x) {
  os.write(kTensorMagic.data(), kTensorMagic.size());
  detail::put<std::uint32_t>(os, kTensorVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(x.rank()));
  for (std::size_t e : x.shape()) detail::put<std::uint64_t>(os, e);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(dtype_of<T>()));
  os.write(reinterpret_cast<const char*>(x.data()), static_cast<std::streamsize>(x.size() * sizeof(T)));
  if (!os) throw FormatError("failed to write tensor container");
}

struct TensorHeader {
  Shape shape;
  DType dtype = DType::f64;
};

inline TensorHeader read_tensor_header(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kTensorMagic) {
    throw FormatError("not a DFTK tensor container (bad magic)");
  }
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kTensorVersion) throw FormatError("unsupported DFTK version " + std::to_string(version));
  const auto rank = detail::get<std::uint32_t>(is);
  if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank));
  TensorHeader h;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = detail::get<std::uint64_t>(is);
    if (e == 0) throw FormatError("tensor container has a zero extent");
    h.shape.push_back(static_cast<std::size_t>(e));
  }
  const auto tag = detail::get<std::uint32_t>(is);
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
  h.dtype = static_cast<DType>(tag);
  return h;
}

/// Reads a container, converting f32/f64 payloads to T.
template <class T>
Tensor<T> read_tensor(std::istream& is) {
  const TensorHeader h = read_tensor_header(is);
  const std::size_t n = element_count(h.shape);
  std::vector<T> data(n);
  if (h.dtype == DType::f64) {
    std::vector<double> raw(n);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw FormatError("tensor container payload truncated");
    }
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<T>(raw[i]);
  } else {
    std::vector<float> raw(n);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
      throw FormatError("tensor container payload truncated");
    }
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<T>(raw[i]);
  }
  return Tensor<T>(h.shape, std::move(data));
}

template <class T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& x) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, x);
}

template <class T = double>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor<T>(is);
}

}  // namespace dualformer
