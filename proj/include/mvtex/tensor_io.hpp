#pragma once

// TWTF flat tensor files: "TWTF", u32 version, u32 rank, u32 dims[rank], then
// little-endian f32 payload in row-major order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"

namespace mvtex {

static_assert(std::endian::native == std::endian::little, "TWTF I/O assumes a little-endian host");

inline constexpr std::array<char, 4> kTwtfMagic = {'T', 'W', 'T', 'F'};
inline constexpr std::uint32_t kTwtfVersion = 1;

struct Tensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t element_count() const
  {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v)
{
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in)
{
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(static_cast<bool>(in), ErrorCode::io, "TWTF: truncated header");
  return v;
}

}  // namespace detail

inline void write_twtf(std::ostream& out, const Tensor& t)
{
  require(t.element_count() == t.data.size(), ErrorCode::shape_mismatch,
          "TWTF: shape does not match payload size");
  out.write(kTwtfMagic.data(), kTwtfMagic.size());
  detail::write_u32(out, kTwtfVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) {
    detail::write_u32(out, d);
  }
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

inline Tensor read_twtf(std::istream& in)
{
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  require(static_cast<bool>(in) && magic == kTwtfMagic, ErrorCode::io, "TWTF: bad magic");
  const auto version = detail::read_u32(in);
  require(version == kTwtfVersion, ErrorCode::io,
          "TWTF: unsupported version " + std::to_string(version));
  const auto rank = detail::read_u32(in);
  require(rank <= 16, ErrorCode::io, "TWTF: implausible rank " + std::to_string(rank));
  Tensor t;
  t.shape.resize(rank);
  for (auto& d : t.shape) {
    d = detail::read_u32(in);
  }
  t.data.resize(t.element_count());
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  require(static_cast<bool>(in), ErrorCode::io, "TWTF: truncated payload");
  return t;
}

inline std::string encode_twtf(const Tensor& t)
{
  std::ostringstream out(std::ios::binary);
  write_twtf(out, t);
  return std::move(out).str();
}

inline Tensor decode_twtf(const std::string& bytes)
{
  std::istringstream in(bytes, std::ios::binary);
  return read_twtf(in);
}

inline void save_twtf(const std::filesystem::path& path, const Tensor& t)
{
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string() + " for writing");
  write_twtf(out, t);
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

inline Tensor load_twtf(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return read_twtf(in);
}

/// Grid as a rank-3 [height, width, channels] tensor.
template <typename T>
Tensor to_tensor(const Grid<T>& g)
{
  Tensor t;
  t.shape = {static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width()),
             static_cast<std::uint32_t>(g.channels())};
  t.data.assign(g.data().begin(), g.data().end());
  return t;
}

template <typename T = float>
Grid<T> grid_from_tensor(const Tensor& t)
{
  require(t.shape.size() == 3 || t.shape.size() == 2, ErrorCode::shape_mismatch,
          "expected a rank-2 or rank-3 tensor for an image");
  const int h = static_cast<int>(t.shape[0]);
  const int w = static_cast<int>(t.shape[1]);
  const int c = t.shape.size() == 3 ? static_cast<int>(t.shape[2]) : 1;
  Grid<T> g(w, h, c);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    g.data()[i] = static_cast<T>(t.data[i]);
  }
  return g;
}

}  // namespace mvtex
