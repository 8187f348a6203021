#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/vec.hpp"

namespace mvtex {

using Face = std::array<int, 3>;

/// Triangle mesh with a UV parameterization. UVs and normals are stored per face
/// corner so that seams and creases survive loading; `adjacency[f]` lists the faces
/// sharing a vertex-index edge with `f` in ascending order.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<std::array<Vec2, 3>> uvs;
  std::vector<std::array<Vec3, 3>> normals;
  std::vector<std::vector<int>> adjacency;

  std::size_t face_count() const noexcept { return faces.size(); }

  Vec3 corner(std::size_t f, int k) const { return vertices[faces[f][k]]; }

  Vec3 face_normal(std::size_t f) const
  {
    return normalize(cross(corner(f, 1) - corner(f, 0), corner(f, 2) - corner(f, 0)));
  }

  double face_area(std::size_t f) const
  {
    return 0.5 * length(cross(corner(f, 1) - corner(f, 0), corner(f, 2) - corner(f, 0)));
  }
};

struct Bounds {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(Vec3 p)
  {
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  }

  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return (lo + hi) * 0.5; }
};

inline Bounds bounds(const Mesh& mesh)
{
  Bounds b;
  for (const auto& v : mesh.vertices) {
    b.expand(v);
  }
  return b;
}

/// Faces are adjacent iff they share an unordered vertex-index edge.
inline std::vector<std::vector<int>> face_adjacency(const Mesh& mesh)
{
  std::map<std::pair<int, int>, std::vector<int>> edge_faces;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      int a = tri[k];
      int b = tri[(k + 1) % 3];
      if (a == b) {
        continue;
      }
      if (a > b) {
        std::swap(a, b);
      }
      edge_faces[{a, b}].push_back(static_cast<int>(f));
    }
  }
  std::vector<std::vector<int>> adj(mesh.faces.size());
  for (const auto& [edge, fs] : edge_faces) {
    for (std::size_t i = 0; i < fs.size(); ++i) {
      for (std::size_t j = 0; j < fs.size(); ++j) {
        if (fs[i] != fs[j]) {
          adj[fs[i]].push_back(fs[j]);
        }
      }
    }
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

/// Area-weighted per-vertex normals; vertices touched only by degenerate faces get +z.
inline std::vector<Vec3> area_weighted_vertex_normals(const Mesh& mesh)
{
  std::vector<Vec3> acc(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    // |cross| is twice the triangle area, so this is the area weighting.
    const Vec3 n = cross(mesh.corner(f, 1) - mesh.corner(f, 0), mesh.corner(f, 2) - mesh.corner(f, 0));
    for (int k = 0; k < 3; ++k) {
      acc[mesh.faces[f][k]] += n;
    }
  }
  for (auto& n : acc) {
    n = normalize(n);
  }
  return acc;
}

/// Checks the structural invariants; throws on violation.
inline void validate_mesh(const Mesh& mesh)
{
  const auto nv = static_cast<int>(mesh.vertices.size());
  require(mesh.uvs.size() == mesh.faces.size(), ErrorCode::missing_uv,
          "mesh has " + std::to_string(mesh.faces.size()) + " faces but " +
              std::to_string(mesh.uvs.size()) + " UV triples");
  require(mesh.normals.size() == mesh.faces.size(), ErrorCode::shape_mismatch,
          "mesh normals are not per face corner");
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int i = mesh.faces[f][k];
      require(i >= 0 && i < nv, ErrorCode::out_of_range,
              "face " + std::to_string(f) + " references vertex " + std::to_string(i) +
                  " of " + std::to_string(nv));
    }
  }
}

/// Completes a mesh from positions, faces and corner UVs: fills missing corner normals
/// with area-weighted vertex normals, renormalises the rest and builds adjacency.
/// `corner_normals` may be empty or contain zero vectors for corners without a normal.
inline Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces,
                      std::vector<std::array<Vec2, 3>> uvs,
                      std::vector<std::array<Vec3, 3>> corner_normals = {})
{
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.faces = std::move(faces);
  mesh.uvs = std::move(uvs);
  require(mesh.uvs.size() == mesh.faces.size(), ErrorCode::missing_uv, "every face needs corner UVs");
  if (corner_normals.empty()) {
    corner_normals.assign(mesh.faces.size(), {});
  }
  require(corner_normals.size() == mesh.faces.size(), ErrorCode::shape_mismatch,
          "corner normal count does not match face count");
  mesh.normals = std::move(corner_normals);
  mesh.normals.resize(mesh.faces.size());
  validate_mesh(mesh);

  std::vector<Vec3> fallback;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      auto& n = mesh.normals[f][k];
      if (length(n) > 1e-12) {
        n = normalize(n);
        continue;
      }
      if (fallback.empty()) {
        fallback = area_weighted_vertex_normals(mesh);
      }
      n = fallback[mesh.faces[f][k]];
    }
  }
  mesh.adjacency = face_adjacency(mesh);
  return mesh;
}

/// Centers the bounding box at the origin and scales uniformly so the longest axis
/// spans [-0.5, 0.5]. UVs and normals are unchanged.
inline Mesh normalize_mesh(Mesh mesh)
{
  require(!mesh.vertices.empty(), ErrorCode::degenerate_mesh, "cannot normalize an empty mesh");
  const Bounds b = bounds(mesh);
  const Vec3 ext = b.extent();
  const double longest = std::max({ext.x, ext.y, ext.z});
  require(longest > 0.0 && std::isfinite(longest), ErrorCode::degenerate_mesh,
          "mesh bounding box has zero extent on all axes");
  const Vec3 c = b.center();
  const double s = 1.0 / longest;
  for (auto& v : mesh.vertices) {
    v = (v - c) * s;
  }
  return mesh;
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
  const auto ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) {
    return {};
  }
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s)
{
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) {
      ++i;
    }
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') {
      ++j;
    }
    if (j > i) {
      out.push_back(s.substr(i, j - i));
    }
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line)
{
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError(ErrorCode::parse, line, "invalid number '" + std::string(tok) + "'");
  }
  return v;
}

/// Resolves a 1-based or negative (relative) OBJ index into a 0-based index.
inline int resolve_index(std::string_view tok, std::size_t count, std::size_t line, const char* what)
{
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0) {
    throw ParseError(ErrorCode::parse, line, std::string("invalid ") + what + " index '" +
                                                 std::string(tok) + "'");
  }
  const long resolved = v > 0 ? v - 1 : static_cast<long>(count) + v;
  if (resolved < 0 || resolved >= static_cast<long>(count)) {
    throw ParseError(ErrorCode::parse, line, std::string(what) + " index " + std::to_string(v) +
                                                 " out of range (" + std::to_string(count) + " defined)");
  }
  return static_cast<int>(resolved);
}

}  // namespace detail

/// Parses Wavefront OBJ text (`v`, `vt`, `vn`, `f`). UVs are mandatory on every face
/// corner. Quads are split as (0,1,2)+(0,2,3). Other record types are ignored.
inline Mesh parse_obj(std::istream& in)
{
  std::vector<Vec3> positions;
  std::vector<Vec2> texcoords;
  std::vector<Vec3> normals;
  std::vector<Face> faces;
  std::vector<std::array<Vec2, 3>> face_uvs;
  std::vector<std::array<Vec3, 3>> face_normals;

  struct CornerRef {
    int v = -1;
    int vt = -1;
    int vn = -1;
  };

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = detail::trim(line.substr(0, hash));
    }
    if (line.empty()) {
      continue;
    }
    const auto toks = detail::split_ws(line);
    const auto& kind = toks[0];
    if (kind == "v") {
      if (toks.size() < 4) {
        throw ParseError(ErrorCode::parse, line_no, "'v' needs 3 coordinates");
      }
      positions.push_back({detail::parse_double(toks[1], line_no), detail::parse_double(toks[2], line_no),
                           detail::parse_double(toks[3], line_no)});
    } else if (kind == "vt") {
      if (toks.size() < 3) {
        throw ParseError(ErrorCode::parse, line_no, "'vt' needs 2 coordinates");
      }
      texcoords.push_back({detail::parse_double(toks[1], line_no), detail::parse_double(toks[2], line_no)});
    } else if (kind == "vn") {
      if (toks.size() < 4) {
        throw ParseError(ErrorCode::parse, line_no, "'vn' needs 3 coordinates");
      }
      normals.push_back({detail::parse_double(toks[1], line_no), detail::parse_double(toks[2], line_no),
                         detail::parse_double(toks[3], line_no)});
    } else if (kind == "f") {
      const std::size_t n = toks.size() - 1;
      if (n < 3) {
        throw ParseError(ErrorCode::parse, line_no, "face needs at least 3 corners");
      }
      if (n > 4) {
        throw ParseError(ErrorCode::parse, line_no, "polygons with more than 4 corners are not supported");
      }
      std::array<CornerRef, 4> refs{};
      for (std::size_t i = 0; i < n; ++i) {
        const auto tok = toks[i + 1];
        const auto s1 = tok.find('/');
        const auto vtok = tok.substr(0, s1);
        refs[i].v = detail::resolve_index(vtok, positions.size(), line_no, "vertex");
        if (s1 == std::string_view::npos) {
          throw ParseError(ErrorCode::missing_uv, line_no, "face corner '" + std::string(tok) + "' has no UV");
        }
        const auto rest = tok.substr(s1 + 1);
        const auto s2 = rest.find('/');
        const auto ttok = rest.substr(0, s2);
        if (ttok.empty()) {
          throw ParseError(ErrorCode::missing_uv, line_no, "face corner '" + std::string(tok) + "' has no UV");
        }
        refs[i].vt = detail::resolve_index(ttok, texcoords.size(), line_no, "texcoord");
        if (s2 != std::string_view::npos) {
          const auto ntok = rest.substr(s2 + 1);
          if (!ntok.empty()) {
            refs[i].vn = detail::resolve_index(ntok, normals.size(), line_no, "normal");
          }
        }
      }
      auto emit = [&](int a, int b, int c) {
        faces.push_back({refs[a].v, refs[b].v, refs[c].v});
        face_uvs.push_back({texcoords[refs[a].vt], texcoords[refs[b].vt], texcoords[refs[c].vt]});
        std::array<Vec3, 3> ns{};
        const std::array<int, 3> idx{a, b, c};
        for (int k = 0; k < 3; ++k) {
          if (refs[idx[k]].vn >= 0) {
            ns[k] = normals[refs[idx[k]].vn];
          }
        }
        face_normals.push_back(ns);
      };
      emit(0, 1, 2);
      if (n == 4) {
        emit(0, 2, 3);
      }
    }
    // o, g, s, usemtl, mtllib and friends carry nothing we need.
  }
  return make_mesh(std::move(positions), std::move(faces), std::move(face_uvs), std::move(face_normals));
}

inline Mesh load_obj(const std::filesystem::path& path)
{
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open mesh " + path.string());
  return parse_obj(in);
}

inline void write_obj(std::ostream& out, const Mesh& mesh)
{
  char buf[160];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& tri : mesh.uvs) {
    for (const auto& uv : tri) {
      std::snprintf(buf, sizeof(buf), "vt %.17g %.17g\n", uv.x, uv.y);
      out << buf;
    }
  }
  for (const auto& tri : mesh.normals) {
    for (const auto& n : tri) {
      std::snprintf(buf, sizeof(buf), "vn %.17g %.17g %.17g\n", n.x, n.y, n.z);
      out << buf;
    }
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out << "f";
    for (int k = 0; k < 3; ++k) {
      const auto corner = f * 3 + k + 1;
      out << ' ' << mesh.faces[f][k] + 1 << '/' << corner << '/' << corner;
    }
    out << '\n';
  }
}

inline void save_obj(const std::filesystem::path& path, const Mesh& mesh)
{
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write mesh " + path.string());
  write_obj(out, mesh);
}

}  // namespace mvtex
