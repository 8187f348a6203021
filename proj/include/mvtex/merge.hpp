#pragma once

// View-dependent merge of partial textures, the texture-space DDPM step and the
// foreground blend back into each view.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/schedule.hpp"

namespace mvtex {

/// Per-view texel weights omega_n * cos_n * coverage_n, normalised per texel. Texels
/// with zero total weight get zero in every view.
inline std::vector<Image> normalized_merge_weights(const std::vector<Image>& cos_tex,
                                                   const std::vector<Mask>& coverage,
                                                   const std::vector<double>& omegas)
{
  require(!cos_tex.empty(), ErrorCode::empty_input, "merge: no views");
  require(cos_tex.size() == coverage.size() && cos_tex.size() == omegas.size(), ErrorCode::shape_mismatch,
          "merge: per-view inputs differ in length");
  const int w = cos_tex[0].width();
  const int h = cos_tex[0].height();
  for (std::size_t n = 0; n < cos_tex.size(); ++n) {
    require(cos_tex[n].width() == w && cos_tex[n].height() == h && cos_tex[n].channels() == 1 &&
                coverage[n].same_extent(cos_tex[n]),
            ErrorCode::resolution_mismatch, "merge: view " + std::to_string(n) + " has a different resolution");
  }
  std::vector<Image> out(cos_tex.size(), Image(w, h, 1));
  for (std::size_t i = 0; i < out[0].size(); ++i) {
    double total = 0.0;
    for (std::size_t n = 0; n < cos_tex.size(); ++n) {
      const double wn = coverage[n].data()[i] ? omegas[n] * std::max(0.0f, cos_tex[n].data()[i]) : 0.0;
      out[n].data()[i] = static_cast<float>(wn);
      total += wn;
    }
    for (auto& o : out) {
      o.data()[i] = total > 0.0 ? static_cast<float>(o.data()[i] / total) : 0.0f;
    }
  }
  return out;
}

/// Weighted per-texel average of the partial textures. A view contributes to a texel
/// only where it is covered and its partial is valid; texels nobody contributes to
/// stay zero and invalid.
inline LatentTexture merge_partial_textures(const std::vector<LatentTexture>& partials,
                                            const std::vector<Image>& cos_tex,
                                            const std::vector<Mask>& coverage,
                                            const std::vector<double>& omegas)
{
  require(!partials.empty(), ErrorCode::empty_input, "merge: no partial textures");
  require(partials.size() == cos_tex.size(), ErrorCode::shape_mismatch, "merge: per-view inputs differ in length");
  const int res = partials[0].resolution();
  const int channels = partials[0].channels();
  std::vector<Mask> usable;
  usable.reserve(partials.size());
  for (std::size_t n = 0; n < partials.size(); ++n) {
    require(partials[n].resolution() == res && partials[n].channels() == channels, ErrorCode::resolution_mismatch,
            "merge: partial texture " + std::to_string(n) + " differs in shape");
    require(coverage.size() == partials.size() && coverage[n].same_extent(partials[n].valid),
            ErrorCode::resolution_mismatch, "merge: coverage mask differs in shape");
    Mask m(res, res, 1, 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.data()[i] = coverage[n].data()[i] && partials[n].valid.data()[i];
    }
    usable.push_back(std::move(m));
  }
  const auto weights = normalized_merge_weights(cos_tex, usable, omegas);
  LatentTexture out(res, channels);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      std::vector<double> acc(channels, 0.0);
      bool any = false;
      for (std::size_t n = 0; n < partials.size(); ++n) {
        const double wn = weights[n](x, y);
        if (wn <= 0.0) {
          continue;
        }
        any = true;
        const auto px = partials[n].data.pixel(x, y);
        for (int c = 0; c < channels; ++c) {
          acc[c] += wn * px[c];
        }
      }
      if (!any) {
        continue;
      }
      out.valid(x, y) = 1;
      auto o = out.data.pixel(x, y);
      for (int c = 0; c < channels; ++c) {
        o[c] = static_cast<float>(acc[c]);
      }
    }
  }
  return out;
}

/// Texture-space backward step. Texels of `ut` outside any chart stay zero; texels the
/// merge did not reach use ut / sqrt(alpha_bar_t) as their estimate.
inline LatentTexture texture_ddpm_step(const LatentTexture& u0_hat, const LatentTexture& ut, int t,
                                       const Image& noise, const NoiseSchedule& s)
{
  const auto c = step_coefficients(s, t);
  require(u0_hat.data.same_shape(ut.data), ErrorCode::shape_mismatch, "texture_ddpm_step: estimate and state differ");
  require(noise.same_shape(ut.data), ErrorCode::shape_mismatch, "texture_ddpm_step: noise shape differs");
  const double inv_sqrt_ab = 1.0 / std::sqrt(s.alpha_bar[t]);
  LatentTexture out(ut.resolution(), ut.channels());
  out.valid = ut.valid;
  for (int y = 0; y < ut.resolution(); ++y) {
    for (int x = 0; x < ut.resolution(); ++x) {
      if (!ut.valid(x, y)) {
        continue;
      }
      const bool has_estimate = u0_hat.valid(x, y) != 0;
      for (int ch = 0; ch < ut.channels(); ++ch) {
        const double z = ut.data(x, y, ch);
        const double x0 = has_estimate ? double(u0_hat.data(x, y, ch)) : z * inv_sqrt_ab;
        out.data(x, y, ch) = static_cast<float>(ddpm_step(x0, z, noise(x, y, ch), c));
      }
    }
  }
  return out;
}

/// mask * rendered + (1 - mask) * z_hat.
inline Image blend_latents(const Mask& fg_mask, const Image& rendered, const Image& z_hat)
{
  require_same_shape(rendered, z_hat, "blend_latents");
  require(fg_mask.same_extent(rendered) && fg_mask.channels() == 1, ErrorCode::shape_mismatch,
          "blend_latents: mask extent differs");
  Image out = z_hat;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (fg_mask(x, y)) {
        const auto src = rendered.pixel(x, y);
        std::copy(src.begin(), src.end(), out.pixel(x, y).begin());
      }
    }
  }
  return out;
}

}  // namespace mvtex
