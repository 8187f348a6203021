#pragma once

// Denoiser contract and the deterministic synthetic backend.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvtex/attention.hpp"
#include "mvtex/error.hpp"
#include "mvtex/grid.hpp"
#include "mvtex/vec.hpp"

namespace mvtex {

enum class AttentionMode { reweigh, replace };

inline std::string_view to_string(AttentionMode m)
{
  return m == AttentionMode::replace ? "replace" : "reweigh";
}

inline AttentionMode attention_mode_from_string(std::string_view s)
{
  if (s == "reweigh") {
    return AttentionMode::reweigh;
  }
  if (s == "replace") {
    return AttentionMode::replace;
  }
  fail(ErrorCode::protocol, "unknown attention mode '" + std::string(s) + "'");
}

struct DenoiseRequest {
  std::string uuid;
  int step_index = 0;         // steps already taken, 0 on the first call
  int timestep = 0;           // training timestep value
  double alpha_bar = 1.0;
  std::string prompt;
  std::vector<std::string> prompt_suffixes;  // optional, one per view
  double cfg_scale = 12.0;
  AttentionMode mode = AttentionMode::reweigh;
  std::vector<Image> latents;
  std::vector<Image> depth_maps;
  std::shared_ptr<const ViewBiases> biases;
  // Surface positions and foreground masks per view. Only local backends read them;
  // they are never sent over the wire.
  std::vector<Image> positions;
  std::vector<Mask> fg_masks;

  int n_views() const noexcept { return static_cast<int>(latents.size()); }

  void validate() const
  {
    require(!latents.empty(), ErrorCode::empty_input, "denoise request carries no latents");
    for (const auto& z : latents) {
      require(z.same_shape(latents[0]), ErrorCode::shape_mismatch, "denoise request latents differ in shape");
    }
    require(depth_maps.empty() || depth_maps.size() == latents.size(), ErrorCode::shape_mismatch,
            "denoise request: one depth map per view required");
    require(prompt_suffixes.empty() || prompt_suffixes.size() == latents.size(), ErrorCode::shape_mismatch,
            "denoise request: one prompt suffix per view required");
    require(alpha_bar > 0.0 && alpha_bar <= 1.0, ErrorCode::parameter_domain, "alpha_bar must be in (0, 1]");
    if (biases) {
      require(biases->per_view.size() == latents.size(), ErrorCode::shape_mismatch,
              "denoise request: bias set does not match the view count");
      for (int r : biases->resolutions) {
        require(r > 0 && latents[0].width() % r == 0, ErrorCode::resolution_mismatch,
                "bias resolution " + std::to_string(r) + " incompatible with latent width " +
                    std::to_string(latents[0].width()));
      }
    }
  }
};

struct DenoiseResponse {
  std::vector<Image> eps;
  std::string backend_info;
};

class DenoiseBackend {
public:
  virtual ~DenoiseBackend() = default;
  virtual DenoiseResponse denoise(const DenoiseRequest& req) = 0;
  /// Latents to images. The default is the identity (latent space is image space).
  virtual std::vector<Image> decode(const std::vector<Image>& latents) { return latents; }
  virtual std::string name() const = 0;
};

/// Marks the request for replace attention during the first `replace_steps` steps and
/// reweighed attention afterwards.
inline DenoiseRequest attach_attention_hooks(DenoiseRequest req, int replace_steps)
{
  req.mode = req.step_index < replace_steps ? AttentionMode::replace : AttentionMode::reweigh;
  return req;
}

/// Target value at a surface point, written into `out` (one value per channel).
using TargetFn = std::function<void(Vec3, std::span<float>)>;

/// p + 0.5 per channel (channels beyond 3 are zero).
inline TargetFn position_ramp()
{
  return [](Vec3 p, std::span<float> out) {
    for (std::size_t c = 0; c < out.size(); ++c) {
      out[c] = c < 3 ? static_cast<float>(p[static_cast<int>(c)] + 0.5) : 0.0f;
    }
  };
}

/// Returns exactly the noise that makes the x0 estimate equal the target on the
/// foreground and zero on the background.
class SyntheticDenoiser : public DenoiseBackend {
public:
  explicit SyntheticDenoiser(TargetFn target) : target_(std::move(target)) {}

  DenoiseResponse denoise(const DenoiseRequest& req) override
  {
    req.validate();
    require(req.positions.size() == req.latents.size() && req.fg_masks.size() == req.latents.size(),
            ErrorCode::backend, "synthetic denoiser needs a position map and mask per view");
    DenoiseResponse res;
    res.backend_info = "synthetic";
    const double ab = req.alpha_bar;
    for (int n = 0; n < req.n_views(); ++n) {
      const Image& z = req.latents[n];
      const Image& pos = req.positions[n];
      const Mask& fg = req.fg_masks[n];
      require(pos.same_extent(z) && fg.same_extent(z) && pos.channels() == 3, ErrorCode::backend,
              "synthetic denoiser: position map does not match latent " + std::to_string(n));
      Image eps(z.width(), z.height(), z.channels());
      if (ab < 1.0) {
        const double sa = std::sqrt(ab);
        const double sn = std::sqrt(1.0 - ab);
        std::vector<float> x0(z.channels());
        for (int y = 0; y < z.height(); ++y) {
          for (int x = 0; x < z.width(); ++x) {
            std::fill(x0.begin(), x0.end(), 0.0f);
            if (fg(x, y)) {
              target_({pos(x, y, 0), pos(x, y, 1), pos(x, y, 2)}, x0);
            }
            for (int c = 0; c < z.channels(); ++c) {
              eps(x, y, c) = static_cast<float>((z(x, y, c) - sa * x0[c]) / sn);
            }
          }
        }
      }
      res.eps.push_back(std::move(eps));
    }
    ++calls_;
    return res;
  }

  std::string name() const override { return "synthetic"; }
  int calls() const noexcept { return calls_.load(); }

private:
  TargetFn target_;
  std::atomic<int> calls_{0};
};

}  // namespace mvtex
