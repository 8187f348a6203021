#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"

namespace mvtex {

/// Writes an 8-bit PNG, mapping [lo, hi] linearly to [0, 255]. Supports 1, 2, 3 and
/// 4 channel images (gray, gray+alpha, RGB, RGBA); other channel counts keep the
/// first three.
inline void write_png(const std::filesystem::path& path, const Image& img, float lo = 0.0f,
                      float hi = 1.0f)
{
  require(img.width() > 0 && img.height() > 0, ErrorCode::shape_mismatch, "write_png: empty image");
  const int src_channels = img.channels();
  const int channels = src_channels > 4 ? 3 : src_channels;
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width());
  desc.height = static_cast<png_uint_32>(img.height());
  switch (channels) {
    case 1: desc.format = PNG_FORMAT_GRAY; break;
    case 2: desc.format = PNG_FORMAT_GA; break;
    case 3: desc.format = PNG_FORMAT_RGB; break;
    default: desc.format = PNG_FORMAT_RGBA; break;
  }
  const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
  std::vector<std::uint8_t> bytes(img.pixel_count() * channels);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto px = img.pixel(i);
    for (int c = 0; c < channels; ++c) {
      const float v = std::clamp((px[c] - lo) * scale, 0.0f, 255.0f);
      bytes[i * channels + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  const auto p = path.string();
  if (!png_image_write_to_file(&desc, p.c_str(), 0, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::io, "write_png: " + p + ": " + desc.message);
  }
}

/// Reads an 8-bit PNG as RGB floats in [0, 1].
inline Image read_png_rgb(const std::filesystem::path& path)
{
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  const auto p = path.string();
  if (!png_image_begin_read_from_file(&desc, p.c_str())) {
    fail(ErrorCode::io, "read_png: " + p + ": " + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, bytes.data(), 0, nullptr)) {
    fail(ErrorCode::io, "read_png: " + p + ": " + desc.message);
  }
  Image img(static_cast<int>(desc.width), static_cast<int>(desc.height), 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    img.data()[i] = bytes[i] / 255.0f;
  }
  return img;
}

}  // namespace mvtex
