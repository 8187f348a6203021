#pragma once

// Deterministic software rasterizer: per-view surface maps, texture lookup into a view
// (rendering) and view-to-texture gathering (inverse rendering).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/mesh.hpp"
#include "mvtex/vec.hpp"

namespace mvtex {

struct ViewCamera {
  double azimuth = 0.0;    // degrees around +y, 0 looks from +z
  double elevation = 0.0;  // degrees
  double distance = 2.0;   // scene units from the origin
  double fov = 35.0;       // vertical, degrees
  int resolution = 64;     // square image side in pixels

  void validate() const
  {
    require(distance > 0.0, ErrorCode::parameter_domain, "camera distance must be positive");
    require(fov > 0.0 && fov < 180.0, ErrorCode::parameter_domain, "camera fov must be in (0, 180)");
    require(resolution > 0, ErrorCode::parameter_domain, "camera resolution must be positive");
  }

  ViewCamera with_resolution(int res) const
  {
    ViewCamera c = *this;
    c.resolution = res;
    return c;
  }

  Vec3 position() const
  {
    const double a = deg_to_rad(azimuth);
    const double e = deg_to_rad(elevation);
    return Vec3{std::cos(e) * std::sin(a), std::sin(e), std::cos(e) * std::cos(a)} * distance;
  }

  /// Unit direction from the origin towards the camera.
  Vec3 direction() const { return normalize(position()); }
};

/// Angle in degrees between the directions of two cameras (as seen from the origin).
inline double camera_angle_deg(const ViewCamera& a, const ViewCamera& b)
{
  return angle_deg(a.position(), b.position());
}

/// Evenly spaced azimuths starting at 0, zero elevation.
inline std::vector<ViewCamera> make_camera_ring(int n_views, double distance, double fov, int resolution)
{
  require(n_views >= 1, ErrorCode::parameter_domain, "camera ring needs at least one view");
  std::vector<ViewCamera> cams;
  cams.reserve(n_views);
  for (int i = 0; i < n_views; ++i) {
    ViewCamera c{360.0 * i / n_views, 0.0, distance, fov, resolution};
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

/// Pinhole projection for one camera. Screen coordinates use the pixel-center
/// convention: pixel (i, j) covers [i - 0.5, i + 0.5] with row 0 at the top.
class Projector {
public:
  static constexpr double kNear = 1e-4;

  explicit Projector(const ViewCamera& cam) : cam_(cam)
  {
    cam.validate();
    eye_ = cam.position();
    forward_ = normalize(-eye_);
    Vec3 up{0.0, 1.0, 0.0};
    if (std::abs(dot(up, forward_)) > 1.0 - 1e-9) {
      up = {0.0, 0.0, -1.0};
    }
    right_ = normalize(cross(forward_, up));
    up_ = cross(right_, forward_);
    tan_half_ = std::tan(deg_to_rad(cam.fov) / 2.0);
    res_ = cam.resolution;
  }

  const ViewCamera& camera() const noexcept { return cam_; }
  Vec3 eye() const noexcept { return eye_; }
  int resolution() const noexcept { return res_; }

  Vec3 to_view(Vec3 p) const
  {
    const Vec3 d = p - eye_;
    return {dot(d, right_), dot(d, up_), dot(d, forward_)};
  }

  /// Screen position (x, y) and view depth of a view-space point.
  std::array<double, 3> view_to_screen(Vec3 v) const
  {
    const double nx = v.x / (v.z * tan_half_);
    const double ny = v.y / (v.z * tan_half_);
    return {(nx + 1.0) * 0.5 * res_ - 0.5, (1.0 - ny) * 0.5 * res_ - 0.5, v.z};
  }

  std::optional<std::array<double, 3>> project(Vec3 p) const
  {
    const Vec3 v = to_view(p);
    if (!(v.z > kNear)) {
      return std::nullopt;
    }
    return view_to_screen(v);
  }

  /// Unit world-space ray direction through a continuous screen position.
  Vec3 ray_direction(double sx, double sy) const
  {
    const double nx = (sx + 0.5) / res_ * 2.0 - 1.0;
    const double ny = 1.0 - (sy + 0.5) / res_ * 2.0;
    return normalize(forward_ + right_ * (nx * tan_half_) + up_ * (ny * tan_half_));
  }

  bool inside_image(double sx, double sy) const
  {
    return sx >= -0.5 && sy >= -0.5 && sx < res_ - 0.5 && sy < res_ - 0.5;
  }

private:
  ViewCamera cam_;
  Vec3 eye_;
  Vec3 forward_;
  Vec3 right_;
  Vec3 up_;
  double tan_half_ = 0.0;
  int res_ = 0;
};

/// Per-view surface maps. Background pixels hold zeros and face id kNoFace.
struct RenderedMaps {
  ViewCamera camera;
  Image position;  // 3 channels, world space
  Image normal;    // 3 channels, unit
  Image depth;     // view-space depth along the optical axis
  Image cosine;    // max(0, n . -view_dir)
  Image uv;        // 2 channels
  Mask fg_mask;
  IdMap face_id;

  int resolution() const noexcept { return fg_mask.width(); }
};

namespace detail {

struct ScreenTri {
  std::array<double, 3> x;
  std::array<double, 3> y;
  std::array<double, 3> z;
  double area = 0.0;
  bool valid = false;
};

inline ScreenTri project_triangle(const Mesh& mesh, std::size_t f, const Projector& proj)
{
  ScreenTri t;
  for (int k = 0; k < 3; ++k) {
    const auto s = proj.project(mesh.corner(f, k));
    if (!s) {
      return t;
    }
    t.x[k] = (*s)[0];
    t.y[k] = (*s)[1];
    t.z[k] = (*s)[2];
  }
  t.area = (t.x[1] - t.x[0]) * (t.y[2] - t.y[0]) - (t.x[2] - t.x[0]) * (t.y[1] - t.y[0]);
  t.valid = t.area != 0.0 && std::isfinite(t.area);
  return t;
}

/// Möller-Trumbore; returns the ray parameter of a hit in (0, inf).
inline std::optional<double> ray_triangle(Vec3 origin, Vec3 dir, Vec3 a, Vec3 b, Vec3 c)
{
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = cross(dir, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < 1e-14) {
    return std::nullopt;
  }
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = dot(s, p) * inv;
  if (u < 0.0 || u > 1.0) {
    return std::nullopt;
  }
  const Vec3 q = cross(s, e1);
  const double v = dot(dir, q) * inv;
  if (v < 0.0 || u + v > 1.0) {
    return std::nullopt;
  }
  const double t = dot(e2, q) * inv;
  if (!(t > 0.0)) {
    return std::nullopt;
  }
  return t;
}

}  // namespace detail

/// Rasterizes the mesh from one camera: perspective-correct barycentric interpolation at
/// pixel centers, z-buffered on view depth, back faces culled, no antialiasing.
inline RenderedMaps render_maps(const Mesh& mesh, const ViewCamera& cam)
{
  const Projector proj(cam);
  const int res = cam.resolution;
  RenderedMaps out;
  out.camera = cam;
  out.position = Image(res, res, 3);
  out.normal = Image(res, res, 3);
  out.depth = Image(res, res, 1);
  out.cosine = Image(res, res, 1);
  out.uv = Image(res, res, 2);
  out.fg_mask = Mask(res, res, 1, 0);
  out.face_id = IdMap(res, res, 1, kNoFace);

  std::vector<double> zbuf(static_cast<std::size_t>(res) * res, std::numeric_limits<double>::infinity());
  std::vector<std::array<double, 3>> bary(zbuf.size());
  const Vec3 eye = proj.eye();

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3 n = cross(mesh.corner(f, 1) - mesh.corner(f, 0), mesh.corner(f, 2) - mesh.corner(f, 0));
    const Vec3 centroid = (mesh.corner(f, 0) + mesh.corner(f, 1) + mesh.corner(f, 2)) / 3.0;
    if (dot(n, centroid - eye) >= 0.0) {
      continue;  // back-facing
    }
    const auto t = detail::project_triangle(mesh, f, proj);
    if (!t.valid) {
      continue;
    }
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({t.x[0], t.x[1], t.x[2]}))));
    const int x1 = std::min(res - 1, static_cast<int>(std::floor(std::max({t.x[0], t.x[1], t.x[2]}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({t.y[0], t.y[1], t.y[2]}))));
    const int y1 = std::min(res - 1, static_cast<int>(std::floor(std::max({t.y[0], t.y[1], t.y[2]}))));
    const double inv_area = 1.0 / t.area;
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        // Screen-space barycentrics via edge functions, sign-normalised by the area.
        const double w0 = ((t.x[1] - px) * (t.y[2] - py) - (t.x[2] - px) * (t.y[1] - py)) * inv_area;
        const double w1 = ((t.x[2] - px) * (t.y[0] - py) - (t.x[0] - px) * (t.y[2] - py)) * inv_area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) {
          continue;
        }
        const double iz = w0 / t.z[0] + w1 / t.z[1] + w2 / t.z[2];
        const double z = 1.0 / iz;
        const std::size_t idx = static_cast<std::size_t>(py) * res + px;
        if (z < zbuf[idx]) {
          zbuf[idx] = z;
          bary[idx] = {w0 / t.z[0] * z, w1 / t.z[1] * z, w2 / t.z[2] * z};
          out.face_id(px, py) = static_cast<std::int32_t>(f);
        }
      }
    }
  }

  for (int py = 0; py < res; ++py) {
    for (int px = 0; px < res; ++px) {
      const std::int32_t f = out.face_id(px, py);
      if (f == kNoFace) {
        continue;
      }
      const auto& b = bary[static_cast<std::size_t>(py) * res + px];
      Vec3 p{};
      Vec3 nrm{};
      Vec2 uv{};
      for (int k = 0; k < 3; ++k) {
        p += mesh.corner(f, k) * b[k];
        nrm += mesh.normals[f][k] * b[k];
        uv = uv + mesh.uvs[f][k] * b[k];
      }
      nrm = normalize(nrm, mesh.face_normal(f));
      const Vec3 view_dir = normalize(p - eye);
      out.fg_mask(px, py) = 1;
      for (int c = 0; c < 3; ++c) {
        out.position(px, py, c) = static_cast<float>(p[c]);
        out.normal(px, py, c) = static_cast<float>(nrm[c]);
      }
      out.uv(px, py, 0) = static_cast<float>(uv.x);
      out.uv(px, py, 1) = static_cast<float>(uv.y);
      out.depth(px, py) = static_cast<float>(zbuf[static_cast<std::size_t>(py) * res + px]);
      out.cosine(px, py) = static_cast<float>(std::max(0.0, -dot(nrm, view_dir)));
    }
  }
  return out;
}

/// Block-downsamples maps for coarser attention resolutions. A block is foreground if
/// any pixel is; position, normal, depth, cosine and uv are averaged over foreground
/// pixels only (normals renormalised). The face id is that of the first foreground
/// pixel in raster order.
inline RenderedMaps downsample_maps(const RenderedMaps& maps, int factor)
{
  const int res = maps.resolution();
  require(factor >= 1 && res % factor == 0, ErrorCode::resolution_mismatch,
          "downsample factor " + std::to_string(factor) + " does not divide resolution " +
              std::to_string(res));
  if (factor == 1) {
    return maps;
  }
  const int out_res = res / factor;
  RenderedMaps out;
  out.camera = maps.camera.with_resolution(out_res);
  out.position = Image(out_res, out_res, 3);
  out.normal = Image(out_res, out_res, 3);
  out.depth = Image(out_res, out_res, 1);
  out.cosine = Image(out_res, out_res, 1);
  out.uv = Image(out_res, out_res, 2);
  out.fg_mask = Mask(out_res, out_res, 1, 0);
  out.face_id = IdMap(out_res, out_res, 1, kNoFace);
  for (int by = 0; by < out_res; ++by) {
    for (int bx = 0; bx < out_res; ++bx) {
      int count = 0;
      std::array<double, 3> p{};
      std::array<double, 3> n{};
      std::array<double, 2> uv{};
      double d = 0.0;
      double c = 0.0;
      std::int32_t face = kNoFace;
      for (int y = by * factor; y < (by + 1) * factor; ++y) {
        for (int x = bx * factor; x < (bx + 1) * factor; ++x) {
          if (!maps.fg_mask(x, y)) {
            continue;
          }
          if (face == kNoFace) {
            face = maps.face_id(x, y);
          }
          ++count;
          for (int k = 0; k < 3; ++k) {
            p[k] += maps.position(x, y, k);
            n[k] += maps.normal(x, y, k);
          }
          uv[0] += maps.uv(x, y, 0);
          uv[1] += maps.uv(x, y, 1);
          d += maps.depth(x, y);
          c += maps.cosine(x, y);
        }
      }
      if (count == 0) {
        continue;
      }
      out.fg_mask(bx, by) = 1;
      out.face_id(bx, by) = face;
      const Vec3 nn = normalize({n[0], n[1], n[2]});
      for (int k = 0; k < 3; ++k) {
        out.position(bx, by, k) = static_cast<float>(p[k] / count);
        out.normal(bx, by, k) = static_cast<float>(nn[k]);
      }
      out.uv(bx, by, 0) = static_cast<float>(uv[0] / count);
      out.uv(bx, by, 1) = static_cast<float>(uv[1] / count);
      out.depth(bx, by) = static_cast<float>(d / count);
      out.cosine(bx, by) = static_cast<float>(c / count);
    }
  }
  return out;
}

/// Texture-space surface maps: interpolated 3D position, normal and face id at each
/// texel center.
struct UVMaps {
  Image position;  // 3 channels
  Image normal;    // 3 channels
  IdMap face_id;
  Mask visibility;  // texels seen by at least one view; filled in by callers
  std::size_t overlap_texels = 0;  // texels claimed by more than one face

  int resolution() const noexcept { return face_id.width(); }

  Vec3 position_at(int x, int y) const
  {
    return {position(x, y, 0), position(x, y, 1), position(x, y, 2)};
  }
  Vec3 normal_at(int x, int y) const { return {normal(x, y, 0), normal(x, y, 1), normal(x, y, 2)}; }
};

/// Rasterizes every face in UV space at texel centers. Shared edges follow a top-left
/// rule so a texel on an edge belongs to exactly one face; genuinely overlapping charts
/// are counted in `overlap_texels` and resolved last-writer-wins.
inline UVMaps render_uv_space_maps(const Mesh& mesh, int tex_res)
{
  require(tex_res > 0, ErrorCode::parameter_domain, "texture resolution must be positive");
  UVMaps out;
  out.position = Image(tex_res, tex_res, 3);
  out.normal = Image(tex_res, tex_res, 3);
  out.face_id = IdMap(tex_res, tex_res, 1, kNoFace);
  out.visibility = Mask(tex_res, tex_res, 1, 0);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    std::array<Vec2, 3> t;
    for (int k = 0; k < 3; ++k) {
      t[k] = uv_to_texel(mesh.uvs[f][k], tex_res);
    }
    double area = (t[1].x - t[0].x) * (t[2].y - t[0].y) - (t[2].x - t[0].x) * (t[1].y - t[0].y);
    if (area == 0.0 || !std::isfinite(area)) {
      continue;
    }
    std::array<int, 3> order{0, 1, 2};
    if (area < 0.0) {
      std::swap(order[1], order[2]);
      area = -area;
    }
    const Vec2 a = t[order[0]];
    const Vec2 b = t[order[1]];
    const Vec2 c = t[order[2]];
    // With positive signed area in (x right, y down) coordinates the triangle is
    // clockwise on screen; an edge is "top" if horizontal going right, "left" if going up.
    auto top_left = [](Vec2 p, Vec2 q) {
      const Vec2 e = q - p;
      return (e.y == 0.0 && e.x < 0.0) || e.y > 0.0;
    };
    const bool tl0 = top_left(b, c);
    const bool tl1 = top_left(c, a);
    const bool tl2 = top_left(a, b);
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(tex_res - 1, static_cast<int>(std::floor(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(tex_res - 1, static_cast<int>(std::floor(std::max({a.y, b.y, c.y}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double e0 = (c.x - b.x) * (y - b.y) - (c.y - b.y) * (x - b.x);
        const double e1 = (a.x - c.x) * (y - c.y) - (a.y - c.y) * (x - c.x);
        const double e2 = (b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x);
        auto inside = [](double e, bool tl) { return e > 0.0 || (e == 0.0 && tl); };
        if (!inside(e0, tl0) || !inside(e1, tl1) || !inside(e2, tl2)) {
          continue;
        }
        std::array<double, 3> w{};
        w[order[0]] = e0 / area;
        w[order[1]] = e1 / area;
        w[order[2]] = e2 / area;
        if (out.face_id(x, y) != kNoFace) {
          ++out.overlap_texels;
        }
        out.face_id(x, y) = static_cast<std::int32_t>(f);
        Vec3 p{};
        Vec3 n{};
        for (int k = 0; k < 3; ++k) {
          p += mesh.corner(f, k) * w[k];
          n += mesh.normals[f][k] * w[k];
        }
        n = normalize(n, mesh.face_normal(f));
        for (int k = 0; k < 3; ++k) {
          out.position(x, y, k) = static_cast<float>(p[k]);
          out.normal(x, y, k) = static_cast<float>(n[k]);
        }
      }
    }
  }
  return out;
}

/// Faces binned by screen-space tile, for exact occlusion queries along camera rays.
class ScreenBins {
public:
  static constexpr int kTile = 8;

  ScreenBins(const Mesh& mesh, const ViewCamera& cam) : mesh_(&mesh), proj_(cam)
  {
    const int res = cam.resolution;
    tiles_x_ = (res + kTile - 1) / kTile;
    bins_.resize(static_cast<std::size_t>(tiles_x_) * tiles_x_);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      const auto t = detail::project_triangle(mesh, f, proj_);
      if (!t.valid) {
        continue;
      }
      const double lx = std::min({t.x[0], t.x[1], t.x[2]}) + 0.5;
      const double hx = std::max({t.x[0], t.x[1], t.x[2]}) + 0.5;
      const double ly = std::min({t.y[0], t.y[1], t.y[2]}) + 0.5;
      const double hy = std::max({t.y[0], t.y[1], t.y[2]}) + 0.5;
      if (hx < 0.0 || hy < 0.0 || lx >= res || ly >= res) {
        continue;
      }
      const int tx0 = std::clamp(static_cast<int>(std::floor(lx)) / kTile, 0, tiles_x_ - 1);
      const int tx1 = std::clamp(static_cast<int>(std::floor(hx)) / kTile, 0, tiles_x_ - 1);
      const int ty0 = std::clamp(static_cast<int>(std::floor(ly)) / kTile, 0, tiles_x_ - 1);
      const int ty1 = std::clamp(static_cast<int>(std::floor(hy)) / kTile, 0, tiles_x_ - 1);
      for (int ty = ty0; ty <= ty1; ++ty) {
        for (int tx = tx0; tx <= tx1; ++tx) {
          bins_[static_cast<std::size_t>(ty) * tiles_x_ + tx].push_back(static_cast<int>(f));
        }
      }
    }
  }

  const Projector& projector() const noexcept { return proj_; }

  /// True if some face other than `self` crosses the camera-to-`p` segment closer than
  /// |p - eye| - eps.
  bool occluded(Vec3 p, double sx, double sy, double eps, int self = -1) const
  {
    const int tx = std::clamp(static_cast<int>(std::floor(sx + 0.5)) / kTile, 0, tiles_x_ - 1);
    const int ty = std::clamp(static_cast<int>(std::floor(sy + 0.5)) / kTile, 0, tiles_x_ - 1);
    const Vec3 eye = proj_.eye();
    const Vec3 d = p - eye;
    const double dist = length(d);
    const Vec3 dir = d / dist;
    for (int f : bins_[static_cast<std::size_t>(ty) * tiles_x_ + tx]) {
      if (f == self) {
        continue;
      }
      const auto hit = detail::ray_triangle(eye, dir, mesh_->corner(f, 0), mesh_->corner(f, 1), mesh_->corner(f, 2));
      if (hit && *hit < dist - eps) {
        return true;
      }
    }
    return false;
  }

private:
  const Mesh* mesh_;
  Projector proj_;
  int tiles_x_ = 0;
  std::vector<std::vector<int>> bins_;
};

struct RasterOptions {
  double depth_epsilon = 1e-3;  // visibility tolerance in scene units
};

/// Where each texel lands in one view. A texel is covered when its surface point is in
/// front of the camera and inside the image, faces the camera (cosine > 0), is not
/// occluded along the camera ray beyond `depth_epsilon`, and all of its
/// bilinear image taps with nonzero weight are foreground.
struct TexelProjection {
  int tex_res = 0;
  int image_res = 0;
  Mask covered;
  std::vector<Vec2> screen;  // per texel, valid where covered
  Image cosine;              // texel-space cosine to the camera, 0 where not covered
};

inline TexelProjection project_texels(const Mesh& mesh, const UVMaps& uvmaps, const RenderedMaps& view,
                                      const RasterOptions& opt = {})
{
  const int tex_res = uvmaps.resolution();
  const ScreenBins bins(mesh, view.camera);
  const Projector& proj = bins.projector();
  TexelProjection out;
  out.tex_res = tex_res;
  out.image_res = view.resolution();
  out.covered = Mask(tex_res, tex_res, 1, 0);
  out.screen.assign(static_cast<std::size_t>(tex_res) * tex_res, Vec2{});
  out.cosine = Image(tex_res, tex_res, 1);
  const Vec3 eye = proj.eye();
  for (int y = 0; y < tex_res; ++y) {
    for (int x = 0; x < tex_res; ++x) {
      const std::int32_t f = uvmaps.face_id(x, y);
      if (f == kNoFace) {
        continue;
      }
      const Vec3 p = uvmaps.position_at(x, y);
      const auto s = proj.project(p);
      if (!s || !proj.inside_image((*s)[0], (*s)[1])) {
        continue;
      }
      const double cosv = -dot(uvmaps.normal_at(x, y), normalize(p - eye));
      if (!(cosv > 0.0)) {
        continue;
      }
      const double sx = (*s)[0];
      const double sy = (*s)[1];
      if (bins.occluded(p, sx, sy, opt.depth_epsilon, f)) {
        continue;
      }
      bool all_fg = true;
      BilinearTaps(sx, sy).for_each([&](int tx, int ty, double w) {
        if (w > 0.0 && !(view.fg_mask.in_bounds(tx, ty) && view.fg_mask(tx, ty))) {
          all_fg = false;
        }
      });
      if (!all_fg) {
        continue;
      }
      out.covered(x, y) = 1;
      out.screen[static_cast<std::size_t>(y) * tex_res + x] = {sx, sy};
      out.cosine(x, y) = static_cast<float>(cosv);
    }
  }
  return out;
}

/// Gathers an image into texture space along a precomputed projection: covered texels
/// receive the foreground-restricted bilinear sample of `img`; the rest stay zero.
inline LatentTexture inverse_render(const Image& img, const RenderedMaps& view, const TexelProjection& proj)
{
  require(img.width() == proj.image_res && img.height() == proj.image_res, ErrorCode::resolution_mismatch,
          "inverse_render: image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
              " but the camera renders " + std::to_string(proj.image_res) + "x" +
              std::to_string(proj.image_res));
  LatentTexture out(proj.tex_res, img.channels());
  for (int y = 0; y < proj.tex_res; ++y) {
    for (int x = 0; x < proj.tex_res; ++x) {
      if (!proj.covered(x, y)) {
        continue;
      }
      const Vec2 s = proj.screen[static_cast<std::size_t>(y) * proj.tex_res + x];
      if (sample_bilinear_masked(img, view.fg_mask, s.x, s.y, out.data.pixel(x, y))) {
        out.valid(x, y) = 1;
      }
    }
  }
  return out;
}

/// Convenience form that derives maps and projection from the mesh and camera.
inline LatentTexture inverse_render(const Image& img, const Mesh& mesh, const ViewCamera& cam, int tex_res,
                                    const RasterOptions& opt = {})
{
  require(img.width() == cam.resolution && img.height() == cam.resolution, ErrorCode::resolution_mismatch,
          "inverse_render: image resolution differs from camera resolution");
  const auto view = render_maps(mesh, cam);
  const auto uvmaps = render_uv_space_maps(mesh, tex_res);
  return inverse_render(img, view, project_texels(mesh, uvmaps, view, opt));
}

/// Looks the texture up at every foreground pixel (validity-aware bilinear at the
/// interpolated UV). `sampled` marks pixels that found at least one valid texel;
/// everything else is zero.
inline Image render_latent(const LatentTexture& tex, const RenderedMaps& view, Mask* sampled = nullptr)
{
  require(tex.channels() > 0, ErrorCode::shape_mismatch, "render_latent: texture has zero channels");
  require(tex.resolution() > 0, ErrorCode::parameter_domain, "render_latent: empty texture");
  const int res = view.resolution();
  Image out(res, res, tex.channels());
  if (sampled) {
    *sampled = Mask(res, res, 1, 0);
  }
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      if (!view.fg_mask(x, y)) {
        continue;
      }
      const Vec2 t = uv_to_texel({view.uv(x, y, 0), view.uv(x, y, 1)}, tex.resolution());
      if (sample_bilinear_masked(tex.data, tex.valid, t.x, t.y, out.pixel(x, y)) && sampled) {
        (*sampled)(x, y) = 1;
      }
    }
  }
  return out;
}

inline Image render_latent(const LatentTexture& tex, const Mesh& mesh, const ViewCamera& cam, int out_res)
{
  return render_latent(tex, render_maps(mesh, cam.with_resolution(out_res)));
}

}  // namespace mvtex
