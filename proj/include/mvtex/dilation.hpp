#pragma once

// Surface-space UV dilation: invalid texels take a distance-weighted average of nearby
// valid texels in 3D, gated by normal angle and sub-island adjacency.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/islands.hpp"
#include "mvtex/knn.hpp"
#include "mvtex/raster.hpp"

namespace mvtex {

struct DilationParams {
  int s = 64;            // grid size in texels
  double d_th = 0.02;    // distance threshold, scene units
  double a_th = 90.0;    // angle threshold, degrees
  int n = 30;            // neighbours per query
  int iter = 10;
  float fallback = 0.5f;  // value for texels still unfilled at the end
  bool apply_fallback = true;

  void validate() const
  {
    require(s > 0, ErrorCode::parameter_domain, "dilation grid size must be positive");
    require(d_th > 0.0, ErrorCode::parameter_domain, "dilation distance threshold must be positive");
    require(a_th > 0.0 && a_th <= 180.0, ErrorCode::parameter_domain, "dilation angle threshold must be in (0, 180]");
    require(n > 0, ErrorCode::parameter_domain, "dilation neighbour count must be positive");
    require(iter > 0, ErrorCode::parameter_domain, "dilation iteration count must be positive");
  }
};

struct DilationReport {
  std::size_t filled = 0;
  std::size_t remaining = 0;
  int iterations_used = 0;
};

struct DilationResult {
  LatentTexture texture;  // valid = originally valid or filled
  Mask unfilled;          // chart texels left without a value (fallback applied if enabled)
  DilationReport report;
  // For each filled texel (linear index y * res + x) the texels it averaged.
  std::vector<std::vector<int>> sources;
};

/// Weight of a candidate at distance `dist` with normal angle `angle_deg` and adjacency
/// flag, or 0 when a gate rejects it.
inline double dilation_weight(double dist, double angle_deg, bool adjacent, const DilationParams& p)
{
  if (!(angle_deg < p.a_th) || !adjacent || !(dist < p.d_th)) {
    return 0.0;
  }
  const double r = dist / p.d_th;
  return 1.0 - r * r;
}

/// Runs up to params.iter passes. Every pass searches the valid set as it stood at the
/// start of the pass and commits its fills together at the end.
inline DilationResult dilate(const LatentTexture& tex, const UVMaps& uvmaps, const SubIslandIndex& index,
                             const DilationParams& params, bool track_sources = false)
{
  params.validate();
  const int res = tex.resolution();
  require(uvmaps.resolution() == res && index.island_id.width() == res, ErrorCode::resolution_mismatch,
          "dilate: texture, UV maps and sub-island index differ in resolution");
  DilationResult out;
  out.texture = tex;
  out.unfilled = Mask(res, res, 1, 0);
  if (track_sources) {
    out.sources.resize(static_cast<std::size_t>(res) * res);
  }
  const int channels = tex.channels();
  auto& valid = out.texture.valid;

  std::vector<int> pending;
  for (int i = 0; i < res * res; ++i) {
    const int x = i % res;
    const int y = i / res;
    if (uvmaps.face_id(x, y) != kNoFace && !valid(x, y) && index.island_id(x, y) >= 0) {
      pending.push_back(i);
    }
  }

  for (int pass = 0; pass < params.iter && !pending.empty(); ++pass) {
    std::vector<int> donors;
    std::vector<Vec3> points;
    for (int i = 0; i < res * res; ++i) {
      const int x = i % res;
      const int y = i / res;
      if (valid(x, y) && uvmaps.face_id(x, y) != kNoFace) {
        donors.push_back(i);
        points.push_back(uvmaps.position_at(x, y));
      }
    }
    if (donors.empty()) {
      break;
    }
    ++out.report.iterations_used;
    const KdTree tree(std::move(points));
    struct Fill {
      int texel;
      std::vector<float> value;
      std::vector<int> from;
    };
    std::vector<Fill> fills;
    std::vector<int> still;
    for (int q : pending) {
      const int qx = q % res;
      const int qy = q / res;
      const Vec3 xq = uvmaps.position_at(qx, qy);
      const Vec3 nq = uvmaps.normal_at(qx, qy);
      const int a = index.island_id(qx, qy);
      double wsum = 0.0;
      std::vector<double> acc(channels, 0.0);
      std::vector<int> from;
      for (const auto& nb : knn_valid(tree, xq, params.n)) {
        const int k = donors[nb.index];
        const int kx = k % res;
        const int ky = k / res;
        const int b = index.island_id(kx, ky);
        const bool adj = b >= 0 && index.adjacent(a, b);
        const double w = dilation_weight(nb.dist, angle_deg(nq, uvmaps.normal_at(kx, ky)), adj, params);
        if (w <= 0.0) {
          continue;
        }
        wsum += w;
        const auto px = out.texture.data.pixel(kx, ky);
        for (int c = 0; c < channels; ++c) {
          acc[c] += w * px[c];
        }
        if (track_sources) {
          from.push_back(k);
        }
      }
      if (wsum != 0.0) {
        Fill f{q, std::vector<float>(channels), std::move(from)};
        for (int c = 0; c < channels; ++c) {
          f.value[c] = static_cast<float>(acc[c] / wsum);
        }
        fills.push_back(std::move(f));
      } else {
        still.push_back(q);
      }
    }
    if (fills.empty()) {
      break;
    }
    for (auto& f : fills) {
      const int x = f.texel % res;
      const int y = f.texel / res;
      std::copy(f.value.begin(), f.value.end(), out.texture.data.pixel(x, y).begin());
      valid(x, y) = 1;
      if (track_sources) {
        out.sources[f.texel] = std::move(f.from);
      }
    }
    out.report.filled += fills.size();
    pending = std::move(still);
  }

  out.report.remaining = pending.size();
  for (int q : pending) {
    const int x = q % res;
    const int y = q / res;
    out.unfilled(x, y) = 1;
    if (params.apply_fallback) {
      for (int c = 0; c < channels; ++c) {
        out.texture.data(x, y, c) = params.fallback;
      }
    }
  }
  return out;
}

}  // namespace mvtex
