#pragma once

// Multi-view latent denoising loop with the texture-space merge.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mvtex/attention.hpp"
#include "mvtex/bake.hpp"
#include "mvtex/denoiser.hpp"
#include "mvtex/error.hpp"
#include "mvtex/merge.hpp"
#include "mvtex/raster.hpp"
#include "mvtex/schedule.hpp"

namespace mvtex {

struct PipelineConfig {
  int steps = 25;
  int latent_resolution = 64;
  int tex_resolution = 64;
  int channels = 3;
  double gamma = 8.0;
  double omega_min = 1e-3;
  int interp_steps = 8;
  int skip_merge_last = 5;
  int replace_attention_steps = 3;
  BiasParams bias;
  std::vector<int> attention_resolutions{8, 16};
  AttendedMode attended = AttendedMode::dense;
  int attended_k = 1;
  std::string prompt;
  std::vector<std::string> prompt_suffixes;
  double cfg_scale = 12.0;
  std::uint64_t seed = 0;
  RasterOptions raster;
  bool trace_textures = false;  // keep merged textures in the trace

  void validate() const
  {
    require(steps >= 1 && steps <= 1000, ErrorCode::parameter_domain, "steps must be in [1, 1000]");
    require(latent_resolution > 0 && tex_resolution > 0, ErrorCode::parameter_domain,
            "resolutions must be positive");
    require(channels > 0, ErrorCode::parameter_domain, "channels must be positive");
    require(skip_merge_last >= 0 && replace_attention_steps >= 0, ErrorCode::parameter_domain,
            "step counts must be non-negative");
    require(attended_k >= 0, ErrorCode::parameter_domain, "attended_k must be non-negative");
    ViewWeightSchedule{steps, gamma, omega_min, interp_steps}.validate();
    bias.validate();
    for (int r : attention_resolutions) {
      require(r > 0 && latent_resolution % r == 0, ErrorCode::resolution_mismatch,
              "attention resolution " + std::to_string(r) + " must divide the latent resolution " +
                  std::to_string(latent_resolution));
    }
  }

  ViewWeightSchedule view_weights() const { return {steps, gamma, omega_min, interp_steps}; }

  /// Whether the merge runs at the given number of completed steps.
  bool merges_at(int step_index) const { return step_index < steps - skip_merge_last; }
};

struct StepTrace {
  int step_index = 0;
  int t = 0;
  bool merged = false;
  AttentionMode mode = AttentionMode::reweigh;
  std::vector<double> omegas;
  std::size_t merged_texels = 0;
  LatentTexture texture;  // U_{t-1}; only kept with trace_textures
};

struct PipelineResult {
  std::vector<Image> latents;  // z_0 per view
  LatentTexture texture;       // last merged U
  std::vector<StepTrace> trace;
};

using TraceFn = std::function<void(const StepTrace&)>;

/// Fills `img` with standard normal draws in storage order.
inline void fill_gaussian(Image& img, std::mt19937_64& rng)
{
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : img.data()) {
    v = dist(rng);
  }
}

inline Image gaussian_image(int w, int h, int c, std::mt19937_64& rng)
{
  Image img(w, h, c);
  fill_gaussian(img, rng);
  return img;
}

/// Stream 0 drives the latent texture, stream n + 1 view n.
inline std::mt19937_64 noise_stream(std::uint64_t seed, std::uint64_t stream)
{
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

/// Per-view inputs fixed for the whole run.
struct PreparedViews {
  std::vector<ViewCamera> cameras;  // at latent resolution
  BakeGeometry geometry;
  std::shared_ptr<const ViewBiases> biases;
  Mask charts;  // texels covered by some UV chart
};

inline PreparedViews prepare_views(const Mesh& mesh, const std::vector<ViewCamera>& cameras,
                                   const PipelineConfig& cfg)
{
  require(!cameras.empty(), ErrorCode::empty_input, "pipeline needs at least one camera");
  PreparedViews p;
  for (const auto& c : cameras) {
    c.validate();
    p.cameras.push_back(c.with_resolution(cfg.latent_resolution));
  }
  p.geometry = prepare_bake(mesh, p.cameras, cfg.tex_resolution, cfg.raster);
  std::vector<RenderedMaps> maps;
  for (const auto& v : p.geometry.views) {
    maps.push_back(v.maps);
  }
  const auto attended = attended_views(static_cast<int>(cameras.size()), cfg.attended, cfg.attended_k);
  p.biases = std::make_shared<ViewBiases>(build_view_biases(maps, attended, cfg.attention_resolutions, cfg.bias));
  const auto& fid = p.geometry.uvmaps.face_id;
  p.charts = Mask(fid.width(), fid.height(), 1, 0);
  for (std::size_t i = 0; i < fid.size(); ++i) {
    p.charts.data()[i] = fid.data()[i] != kNoFace;
  }
  return p;
}

inline PipelineResult run_pipeline(const Mesh& mesh, const std::vector<ViewCamera>& cameras,
                                   DenoiseBackend& backend, const PipelineConfig& cfg, const TraceFn& on_step = {})
{
  cfg.validate();
  require(cfg.prompt_suffixes.empty() || cfg.prompt_suffixes.size() == cameras.size(), ErrorCode::config,
          "one prompt suffix per camera required");
  const auto prep = prepare_views(mesh, cameras, cfg);
  const auto sched = make_schedule(cfg.steps);
  const auto weights = cfg.view_weights();
  const int n_views = static_cast<int>(cameras.size());
  const int res = cfg.latent_resolution;
  const int tex_res = cfg.tex_resolution;

  std::mt19937_64 tex_rng = noise_stream(cfg.seed, 0);
  std::vector<std::mt19937_64> view_rng;
  for (int n = 0; n < n_views; ++n) {
    view_rng.push_back(noise_stream(cfg.seed, static_cast<std::uint64_t>(n) + 1));
  }

  PipelineResult out;
  for (int n = 0; n < n_views; ++n) {
    out.latents.push_back(gaussian_image(res, res, cfg.channels, view_rng[n]));
  }
  LatentTexture u(tex_res, cfg.channels);
  {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (int y = 0; y < tex_res; ++y) {
      for (int x = 0; x < tex_res; ++x) {
        if (!prep.charts(x, y)) {
          continue;
        }
        u.valid(x, y) = 1;
        for (int c = 0; c < cfg.channels; ++c) {
          u.data(x, y, c) = dist(tex_rng);
        }
      }
    }
  }

  DenoiseRequest base;
  base.prompt = cfg.prompt;
  base.prompt_suffixes = cfg.prompt_suffixes;
  base.cfg_scale = cfg.cfg_scale;
  base.biases = prep.biases;
  for (const auto& v : prep.geometry.views) {
    base.depth_maps.push_back(v.maps.depth);
    base.positions.push_back(v.maps.position);
    base.fg_masks.push_back(v.maps.fg_mask);
  }

  for (int t = cfg.steps; t >= 1; --t) {
    const int step_index = cfg.steps - t;
    try {
      DenoiseRequest req = base;
      req.step_index = step_index;
      req.timestep = sched.train_step[t];
      req.alpha_bar = sched.alpha_bar[t];
      req.latents = out.latents;
      req = attach_attention_hooks(std::move(req), cfg.replace_attention_steps);
      const auto res_eps = backend.denoise(req);
      require(static_cast<int>(res_eps.eps.size()) == n_views, ErrorCode::backend,
              "backend returned " + std::to_string(res_eps.eps.size()) + " noise maps for " +
                  std::to_string(n_views) + " views");
      std::vector<Image> x0;
      for (int n = 0; n < n_views; ++n) {
        require(res_eps.eps[n].same_shape(out.latents[n]), ErrorCode::backend,
                "backend noise map " + std::to_string(n) + " has the wrong shape");
        x0.push_back(predict_x0(out.latents[n], res_eps.eps[n], t, sched));
      }

      StepTrace st;
      st.step_index = step_index;
      st.t = t;
      st.mode = req.mode;
      st.merged = cfg.merges_at(step_index);
      std::vector<Image> noise;
      for (int n = 0; n < n_views; ++n) {
        noise.push_back(gaussian_image(res, res, cfg.channels, view_rng[n]));
      }
      if (st.merged) {
        std::vector<LatentTexture> partials;
        std::vector<Image> cos_tex;
        std::vector<Mask> coverage;
        for (int n = 0; n < n_views; ++n) {
          const auto& v = prep.geometry.views[n];
          partials.push_back(inverse_render(x0[n], v.maps, v.projection));
          cos_tex.push_back(v.cos_tex);
          coverage.push_back(v.projection.covered);
          st.omegas.push_back(view_weight(t, prep.geometry.theta[n], weights));
        }
        const auto u0 = merge_partial_textures(partials, cos_tex, coverage, st.omegas);
        for (auto m : u0.valid.data()) {
          st.merged_texels += m != 0;
        }
        const Image u_noise = gaussian_image(tex_res, tex_res, cfg.channels, tex_rng);
        u = texture_ddpm_step(u0, u, t, u_noise, sched);
        for (int n = 0; n < n_views; ++n) {
          const auto& maps = prep.geometry.views[n].maps;
          Mask sampled;
          const Image rendered = render_latent(u, maps, &sampled);
          for (std::size_t i = 0; i < sampled.size(); ++i) {
            sampled.data()[i] = sampled.data()[i] && maps.fg_mask.data()[i];
          }
          out.latents[n] = blend_latents(sampled, rendered, ddpm_step(x0[n], out.latents[n], t, noise[n], sched));
        }
        if (cfg.trace_textures) {
          st.texture = u;
        }
      } else {
        for (int n = 0; n < n_views; ++n) {
          out.latents[n] = ddpm_step(x0[n], out.latents[n], t, noise[n], sched);
        }
      }
      if (on_step) {
        on_step(st);
      }
      out.trace.push_back(std::move(st));
    } catch (const Error& e) {
      throw Error(e.code(), "step " + std::to_string(step_index) + " (t=" + std::to_string(t) + "): " + e.what());
    }
  }
  out.texture = std::move(u);
  return out;
}

}  // namespace mvtex
