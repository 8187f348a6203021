#pragma once

// Per-view texture-space geometry shared by the latent merge and the final bake.

#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/mesh.hpp"
#include "mvtex/raster.hpp"

namespace mvtex {

struct ViewBake {
  RenderedMaps maps;
  TexelProjection projection;
  Image cos_tex;  // the view's cosine map gathered into texture space
};

struct BakeGeometry {
  UVMaps uvmaps;  // visibility = texels covered by at least one view
  std::vector<ViewBake> views;
  std::vector<double> theta;  // degrees between each camera and camera 0
};

inline BakeGeometry prepare_bake(const Mesh& mesh, const std::vector<ViewCamera>& cameras, int tex_res,
                                 const RasterOptions& opt = {})
{
  require(!cameras.empty(), ErrorCode::empty_input, "bake needs at least one camera");
  BakeGeometry g;
  g.uvmaps = render_uv_space_maps(mesh, tex_res);
  for (const auto& cam : cameras) {
    ViewBake v;
    v.maps = render_maps(mesh, cam);
    v.projection = project_texels(mesh, g.uvmaps, v.maps, opt);
    v.cos_tex = inverse_render(v.maps.cosine, v.maps, v.projection).data;
    for (std::size_t i = 0; i < g.uvmaps.visibility.size(); ++i) {
      g.uvmaps.visibility.data()[i] |= v.projection.covered.data()[i];
    }
    g.theta.push_back(camera_angle_deg(cam, cameras.front()));
    g.views.push_back(std::move(v));
  }
  return g;
}

}  // namespace mvtex
