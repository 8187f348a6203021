#pragma once

// Final texture: view-weighted merge of the decoded images followed by surface-space
// dilation of the texels no view reached.

#include <string>
#include <vector>

#include "mvtex/bake.hpp"
#include "mvtex/dilation.hpp"
#include "mvtex/error.hpp"
#include "mvtex/islands.hpp"
#include "mvtex/merge.hpp"
#include "mvtex/schedule.hpp"

namespace mvtex {

struct FinalTexture {
  LatentTexture merged;  // valid = texels some view contributed to
  BakeGeometry geometry;
};

/// Merges full-resolution images with weights max(|cos theta_n|^gamma, omega_min) times
/// the view's texel cosine.
inline FinalTexture merge_final_textures(const std::vector<Image>& images, const Mesh& mesh,
                                         const std::vector<ViewCamera>& cameras, double gamma, double omega_min,
                                         int tex_res, const RasterOptions& opt = {})
{
  require(images.size() == cameras.size(), ErrorCode::manifest_mismatch,
          std::to_string(images.size()) + " images for " + std::to_string(cameras.size()) + " cameras");
  require(!images.empty(), ErrorCode::empty_input, "no images to bake");
  for (std::size_t n = 0; n < images.size(); ++n) {
    require(images[n].width() == cameras[n].resolution && images[n].height() == cameras[n].resolution,
            ErrorCode::resolution_mismatch,
            "image " + std::to_string(n) + " is " + std::to_string(images[n].width()) + "x" +
                std::to_string(images[n].height()) + " but its camera renders " +
                std::to_string(cameras[n].resolution));
  }
  FinalTexture out;
  out.geometry = prepare_bake(mesh, cameras, tex_res, opt);
  std::vector<LatentTexture> partials;
  std::vector<Image> cos_tex;
  std::vector<Mask> coverage;
  std::vector<double> omegas;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& v = out.geometry.views[n];
    partials.push_back(inverse_render(images[n], v.maps, v.projection));
    cos_tex.push_back(v.cos_tex);
    coverage.push_back(v.projection.covered);
    omegas.push_back(final_view_weight(out.geometry.theta[n], gamma, omega_min));
  }
  out.merged = merge_partial_textures(partials, cos_tex, coverage, omegas);
  return out;
}

struct FinishedTexture {
  LatentTexture texture;
  DilationResult dilation;
  SubIslandIndex islands;
};

/// Dilates a merged texture over its own UV maps.
inline FinishedTexture finish_texture(const LatentTexture& merged, const UVMaps& uvmaps, const Mesh& mesh,
                                      const DilationParams& params)
{
  FinishedTexture out;
  out.islands = build_sub_islands(uvmaps.face_id, mesh, params.s);
  out.dilation = dilate(merged, uvmaps, out.islands, params);
  out.texture = out.dilation.texture;
  return out;
}

}  // namespace mvtex
