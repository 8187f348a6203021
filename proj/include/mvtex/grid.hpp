#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/vec.hpp"

namespace mvtex {

/// Dense row-major width x height x channels array. Row 0 is the top row.
template <typename T>
class Grid {
public:
  Grid() = default;

  Grid(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels)
  {
    require(width >= 0 && height >= 0 && channels >= 0, ErrorCode::shape_mismatch,
            "grid dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool in_bounds(int x, int y) const noexcept
  {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::size_t index(int x, int y, int c = 0) const noexcept
  {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<T> pixel(int x, int y) noexcept
  {
    return {data_.data() + index(x, y), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int x, int y) const noexcept
  {
    return {data_.data() + index(x, y), static_cast<std::size_t>(channels_)};
  }

  /// Pixel by linear index (y * width + x).
  std::span<T> pixel(std::size_t i) noexcept
  {
    return {data_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(std::size_t i) const noexcept
  {
    return {data_.data() + i * channels_, static_cast<std::size_t>(channels_)};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept
  {
    return width_ == other.width() && height_ == other.height() && channels_ == other.channels();
  }

  template <typename U>
  bool same_extent(const Grid<U>& other) const noexcept
  {
    return width_ == other.width() && height_ == other.height();
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Grid&, const Grid&) = default;

private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;
using Mask = Grid<std::uint8_t>;
using IdMap = Grid<std::int32_t>;

inline constexpr std::int32_t kNoFace = -1;

inline void require_same_shape(const Image& a, const Image& b, const char* what)
{
  require(a.same_shape(b), ErrorCode::shape_mismatch,
          std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
              std::to_string(a.height()) + "x" + std::to_string(a.channels()) + " vs " +
              std::to_string(b.width()) + "x" + std::to_string(b.height()) + "x" +
              std::to_string(b.channels()) + ")");
}

/// Bilinear tap set around a continuous pixel-center coordinate (pixel i has center i).
struct BilinearTaps {
  int x0 = 0;
  int y0 = 0;
  double fx = 0.0;
  double fy = 0.0;

  BilinearTaps(double x, double y)
  {
    const double flx = std::floor(x);
    const double fly = std::floor(y);
    x0 = static_cast<int>(flx);
    y0 = static_cast<int>(fly);
    fx = x - flx;
    fy = y - fly;
  }

  template <typename F>
  void for_each(F&& visit) const
  {
    visit(x0, y0, (1.0 - fx) * (1.0 - fy));
    visit(x0 + 1, y0, fx * (1.0 - fy));
    visit(x0, y0 + 1, (1.0 - fx) * fy);
    visit(x0 + 1, y0 + 1, fx * fy);
  }
};

/// Clamp-to-edge bilinear sample of every channel into `out`.
inline void sample_bilinear(const Image& img, double x, double y, std::span<float> out)
{
  std::vector<double> acc(static_cast<std::size_t>(img.channels()), 0.0);
  BilinearTaps(x, y).for_each([&](int tx, int ty, double w) {
    tx = std::clamp(tx, 0, img.width() - 1);
    ty = std::clamp(ty, 0, img.height() - 1);
    const auto px = img.pixel(tx, ty);
    for (std::size_t c = 0; c < acc.size(); ++c) {
      acc[c] += w * px[c];
    }
  });
  for (std::size_t c = 0; c < acc.size(); ++c) {
    out[c] = static_cast<float>(acc[c]);
  }
}

/// Bilinear sample restricted to taps where `mask` is set, renormalised over the
/// surviving weights. Taps outside the grid are dropped. Returns false (and leaves
/// `out` untouched) when no tap with positive weight survives.
inline bool sample_bilinear_masked(const Image& img, const Mask& mask, double x, double y,
                                   std::span<float> out)
{
  std::vector<double> acc(static_cast<std::size_t>(img.channels()), 0.0);
  double wsum = 0.0;
  BilinearTaps(x, y).for_each([&](int tx, int ty, double w) {
    if (w <= 0.0 || !img.in_bounds(tx, ty) || !mask(tx, ty)) {
      return;
    }
    const auto px = img.pixel(tx, ty);
    for (std::size_t c = 0; c < acc.size(); ++c) {
      acc[c] += w * px[c];
    }
    wsum += w;
  });
  if (!(wsum > 0.0)) {
    return false;
  }
  for (std::size_t c = 0; c < acc.size(); ++c) {
    out[c] = static_cast<float>(acc[c] / wsum);
  }
  return true;
}

// Texture-space convention: texel (x, y) of a res x res texture has its center at
// u = (x + 0.5) / res, v = 1 - (y + 0.5) / res, so row 0 holds the top (v ~ 1).

inline Vec2 texel_center_uv(int x, int y, int res)
{
  return {(x + 0.5) / res, 1.0 - (y + 0.5) / res};
}

/// Continuous texel coordinate (pixel-center convention) of a UV point.
inline Vec2 uv_to_texel(Vec2 uv, int res)
{
  return {uv.x * res - 0.5, (1.0 - uv.y) * res - 0.5};
}

/// Texture-space latent or colour texture with per-texel validity.
struct LatentTexture {
  Image data;
  Mask valid;

  LatentTexture() = default;
  LatentTexture(int res, int channels) : data(res, res, channels, 0.0f), valid(res, res, 1, 0) {}

  int resolution() const noexcept { return data.width(); }
  int channels() const noexcept { return data.channels(); }
};

}  // namespace mvtex
