#pragma once

// Procedural test meshes with ready-made UV atlases.

#include <array>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "mvtex/mesh.hpp"

namespace mvtex {

/// Six-chart box projection atlas: each face goes to the chart of its dominant normal
/// axis, is projected onto that axis plane (orientation preserving) and the charts are
/// packed into a 3 x 2 layout with a uniform texel density. On a convex surface every
/// chart is injective.
inline std::vector<std::array<Vec2, 3>> box_projection_uvs(const std::vector<Vec3>& vertices,
                                                           const std::vector<Face>& faces,
                                                           double margin = 0.06)
{
  // Tangent frames (a, b) with a x b equal to the chart axis.
  struct Frame {
    Vec3 a;
    Vec3 b;
  };
  static const std::array<Frame, 6> frames = {{
      {{0, 0, -1}, {0, 1, 0}},  // +x
      {{0, 0, 1}, {0, 1, 0}},   // -x
      {{1, 0, 0}, {0, 0, -1}},  // +y
      {{1, 0, 0}, {0, 0, 1}},   // -y
      {{1, 0, 0}, {0, 1, 0}},   // +z
      {{-1, 0, 0}, {0, 1, 0}},  // -z
  }};

  std::vector<int> chart(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 p0 = vertices[faces[f][0]];
    const Vec3 n = cross(vertices[faces[f][1]] - p0, vertices[faces[f][2]] - p0);
    int axis = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(n[i]) > std::abs(n[axis])) {
        axis = i;
      }
    }
    chart[f] = axis * 2 + (n[axis] >= 0.0 ? 0 : 1);
  }

  std::array<Vec2, 6> lo;
  std::array<Vec2, 6> hi;
  lo.fill({1e300, 1e300});
  hi.fill({-1e300, -1e300});
  double extent = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const auto& fr = frames[chart[f]];
    for (int k = 0; k < 3; ++k) {
      const Vec3 p = vertices[faces[f][k]];
      const Vec2 q{dot(p, fr.a), dot(p, fr.b)};
      auto& l = lo[chart[f]];
      auto& h = hi[chart[f]];
      l = {std::min(l.x, q.x), std::min(l.y, q.y)};
      h = {std::max(h.x, q.x), std::max(h.y, q.y)};
    }
  }
  for (int c = 0; c < 6; ++c) {
    if (hi[c].x >= lo[c].x) {
      extent = std::max({extent, hi[c].x - lo[c].x, hi[c].y - lo[c].y});
    }
  }
  const double cell = 1.0 / 3.0;
  const double scale = extent > 0.0 ? cell * (1.0 - 2.0 * margin) / extent : 0.0;

  std::vector<std::array<Vec2, 3>> uvs(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const int c = chart[f];
    const auto& fr = frames[c];
    const Vec2 mid = (lo[c] + hi[c]) * 0.5;
    const Vec2 cell_center{(c % 3 + 0.5) * cell, 0.25 + (c / 3) * 0.5};
    for (int k = 0; k < 3; ++k) {
      const Vec3 p = vertices[faces[f][k]];
      const Vec2 q{dot(p, fr.a), dot(p, fr.b)};
      uvs[f][k] = cell_center + (q - mid) * scale;
    }
  }
  return uvs;
}

namespace detail {

/// Flips faces whose winding points towards `center`.
inline void orient_outward(const std::vector<Vec3>& vertices, std::vector<Face>& faces, Vec3 center)
{
  for (auto& f : faces) {
    const Vec3 n = cross(vertices[f[1]] - vertices[f[0]], vertices[f[2]] - vertices[f[0]]);
    const Vec3 c = (vertices[f[0]] + vertices[f[1]] + vertices[f[2]]) / 3.0;
    if (dot(n, c - center) < 0.0) {
      std::swap(f[1], f[2]);
    }
  }
}

}  // namespace detail

/// Icosphere of the given subdivision level (20 * 4^level faces) with smooth normals
/// and a box-projection atlas.
inline Mesh make_icosphere(int level, double radius = 0.5)
{
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : verts) {
    v = normalize(v);
  }
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) {
        return it->second;
      }
      verts.push_back(normalize((verts[a] + verts[b]) * 0.5));
      const int id = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = mid(f[0], f[1]);
      const int b = mid(f[1], f[2]);
      const int c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    faces = std::move(next);
  }
  detail::orient_outward(verts, faces, {});
  std::vector<std::array<Vec3, 3>> normals(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      normals[f][k] = verts[faces[f][k]];
    }
  }
  for (auto& v : verts) {
    v = v * radius;
  }
  auto uvs = box_projection_uvs(verts, faces);
  return make_mesh(std::move(verts), std::move(faces), std::move(uvs), std::move(normals));
}

/// Axis-aligned cube with 8 shared corners (so faces are edge-adjacent), one UV chart
/// per side and flat per-corner normals.
inline Mesh make_cube(double size = 1.0)
{
  const double h = size / 2.0;
  std::vector<Vec3> verts;
  for (int i = 0; i < 8; ++i) {
    verts.push_back({(i & 1) ? h : -h, (i & 2) ? h : -h, (i & 4) ? h : -h});
  }
  std::vector<Face> faces = {{0, 2, 6}, {0, 6, 4}, {1, 5, 7}, {1, 7, 3},   // -x, +x
                             {0, 4, 5}, {0, 5, 1}, {2, 3, 7}, {2, 7, 6},   // -y, +y
                             {0, 1, 3}, {0, 3, 2}, {4, 6, 7}, {4, 7, 5}};  // -z, +z
  detail::orient_outward(verts, faces, {});
  std::vector<std::array<Vec3, 3>> normals(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Vec3 n = normalize(cross(verts[faces[f][1]] - verts[faces[f][0]], verts[faces[f][2]] - verts[faces[f][0]]));
    normals[f] = {n, n, n};
  }
  auto uvs = box_projection_uvs(verts, faces);
  return make_mesh(std::move(verts), std::move(faces), std::move(uvs), std::move(normals));
}

/// Planar quad (p0, p1, p2, p3 counter-clockwise seen from the front) split into
/// (0,1,2)+(0,2,3), with the given corner UVs.
inline Mesh make_quad(std::array<Vec3, 4> corners, std::array<Vec2, 4> uv)
{
  std::vector<Vec3> verts(corners.begin(), corners.end());
  std::vector<Face> faces = {{0, 1, 2}, {0, 2, 3}};
  std::vector<std::array<Vec2, 3>> uvs = {{uv[0], uv[1], uv[2]}, {uv[0], uv[2], uv[3]}};
  return make_mesh(std::move(verts), std::move(faces), std::move(uvs));
}

/// Concatenates meshes (vertex indices offset, adjacency rebuilt).
inline Mesh merge_meshes(const std::vector<Mesh>& parts)
{
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::vector<std::array<Vec2, 3>> uvs;
  std::vector<std::array<Vec3, 3>> normals;
  for (const auto& m : parts) {
    const int base = static_cast<int>(verts.size());
    verts.insert(verts.end(), m.vertices.begin(), m.vertices.end());
    for (const auto& f : m.faces) {
      faces.push_back({f[0] + base, f[1] + base, f[2] + base});
    }
    uvs.insert(uvs.end(), m.uvs.begin(), m.uvs.end());
    normals.insert(normals.end(), m.normals.begin(), m.normals.end());
  }
  return make_mesh(std::move(verts), std::move(faces), std::move(uvs), std::move(normals));
}

}  // namespace mvtex
