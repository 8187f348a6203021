#pragma once

// UV charts, their grid subdivision into sub-islands, and surface adjacency between
// sub-islands.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <tuple>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/mesh.hpp"

namespace mvtex {

struct IslandMap {
  IdMap ids;       // per texel, -1 outside every chart
  int count = 0;
};

namespace detail {

class UnionFind {
public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  int find(int a)
  {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }

  void unite(int a, int b)
  {
    a = find(a);
    b = find(b);
    if (a != b) {
      parent_[std::max(a, b)] = std::min(a, b);
    }
  }

private:
  std::vector<int> parent_;
};

/// Corner of face f holding vertex v, or -1.
inline int corner_of(const Mesh& mesh, std::size_t f, int v)
{
  for (int k = 0; k < 3; ++k) {
    if (mesh.faces[f][k] == v) {
      return k;
    }
  }
  return -1;
}

}  // namespace detail

/// Per-face chart labels: faces sharing a mesh edge whose two endpoints carry the same
/// UVs on both sides belong to one chart.
inline std::vector<int> face_charts(const Mesh& mesh)
{
  detail::UnionFind uf(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int g : mesh.adjacency[f]) {
      if (g <= static_cast<int>(f)) {
        continue;
      }
      bool same_uv = true;
      int shared = 0;
      for (int k = 0; k < 3; ++k) {
        const int kg = detail::corner_of(mesh, g, mesh.faces[f][k]);
        if (kg < 0) {
          continue;
        }
        ++shared;
        const Vec2 a = mesh.uvs[f][k];
        const Vec2 b = mesh.uvs[g][kg];
        same_uv = same_uv && a.x == b.x && a.y == b.y;
      }
      if (shared >= 2 && same_uv) {
        uf.unite(static_cast<int>(f), g);
      }
    }
  }
  std::vector<int> out(mesh.faces.size());
  for (std::size_t f = 0; f < out.size(); ++f) {
    out[f] = uf.find(static_cast<int>(f));
  }
  return out;
}

/// Original UV islands as a texel map. Ids are dense, numbered in raster order of each
/// island's first texel.
inline IslandMap original_islands(const IdMap& face_id, const Mesh& mesh)
{
  const auto charts = face_charts(mesh);
  IslandMap out{IdMap(face_id.width(), face_id.height(), 1, -1), 0};
  std::map<int, int> dense;
  for (int y = 0; y < face_id.height(); ++y) {
    for (int x = 0; x < face_id.width(); ++x) {
      const int f = face_id(x, y);
      if (f == kNoFace) {
        continue;
      }
      require(f >= 0 && f < static_cast<int>(charts.size()), ErrorCode::out_of_range,
              "face id map refers to face " + std::to_string(f) + " beyond the mesh");
      auto [it, inserted] = dense.try_emplace(charts[f], out.count);
      if (inserted) {
        ++out.count;
      }
      out.ids(x, y) = it->second;
    }
  }
  return out;
}

/// Sub-islands: each original island cut by an s x s texel grid.
struct SubIslandIndex {
  IdMap island_id;  // per texel sub-island id, -1 where invalid
  int grid_size = 0;
  IslandMap original;
  int count = 0;
  std::vector<std::tuple<int, int, int>> keys;  // (island, cell x, cell y) per id
  std::vector<std::uint8_t> adjacency;           // count x count, filled by sub_island_adjacency

  bool adjacent(int a, int b) const { return adjacency[static_cast<std::size_t>(a) * count + b] != 0; }
};

inline SubIslandIndex grid_islands(const IdMap& face_id, const IslandMap& original, int s)
{
  require(s > 0, ErrorCode::parameter_domain, "grid size must be positive");
  require(original.ids.same_extent(face_id), ErrorCode::resolution_mismatch, "island map and face map differ in size");
  SubIslandIndex idx;
  idx.grid_size = s;
  idx.original = original;
  idx.island_id = IdMap(face_id.width(), face_id.height(), 1, -1);
  std::map<std::tuple<int, int, int>, int> dense;
  for (int y = 0; y < face_id.height(); ++y) {
    for (int x = 0; x < face_id.width(); ++x) {
      const int isl = original.ids(x, y);
      if (face_id(x, y) == kNoFace || isl < 0) {
        continue;
      }
      const auto key = std::make_tuple(isl, x / s, y / s);
      auto [it, inserted] = dense.try_emplace(key, idx.count);
      if (inserted) {
        ++idx.count;
        idx.keys.push_back(key);
      }
      idx.island_id(x, y) = it->second;
    }
  }
  idx.adjacency.assign(static_cast<std::size_t>(idx.count) * idx.count, 0);
  for (int a = 0; a < idx.count; ++a) {
    idx.adjacency[static_cast<std::size_t>(a) * idx.count + a] = 1;
  }
  return idx;
}

/// Sub-islands A and B are adjacent when a face with texels in A is, or shares a mesh
/// edge with, a face with texels in B. Reflexive and symmetric.
inline void sub_island_adjacency(SubIslandIndex& idx, const Mesh& mesh, const IdMap& face_id)
{
  require(idx.island_id.same_extent(face_id), ErrorCode::resolution_mismatch, "sub-island map and face map differ in size");
  std::vector<std::vector<int>> in_face(mesh.faces.size());
  for (int y = 0; y < face_id.height(); ++y) {
    for (int x = 0; x < face_id.width(); ++x) {
      const int f = face_id(x, y);
      const int s = idx.island_id(x, y);
      if (f == kNoFace || s < 0) {
        continue;
      }
      auto& list = in_face[f];
      if (std::find(list.begin(), list.end(), s) == list.end()) {
        list.push_back(s);
      }
    }
  }
  auto link = [&](int a, int b) {
    idx.adjacency[static_cast<std::size_t>(a) * idx.count + b] = 1;
    idx.adjacency[static_cast<std::size_t>(b) * idx.count + a] = 1;
  };
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int a : in_face[f]) {
      for (int b : in_face[f]) {
        link(a, b);
      }
      for (int g : mesh.adjacency[f]) {
        for (int b : in_face[g]) {
          link(a, b);
        }
      }
    }
  }
}

/// Convenience: islands, grid split and adjacency in one go.
inline SubIslandIndex build_sub_islands(const IdMap& face_id, const Mesh& mesh, int s)
{
  auto idx = grid_islands(face_id, original_islands(face_id, mesh), s);
  sub_island_adjacency(idx, mesh, face_id);
  return idx;
}

}  // namespace mvtex
