#include <gtest/gtest.h>

#include <cmath>

#include "mvtex/pipeline.hpp"
#include "mvtex/primitives.hpp"

using namespace mvtex;

namespace {

PipelineConfig small_config(int steps = 10)
{
  PipelineConfig cfg;
  cfg.steps = steps;
  cfg.latent_resolution = 32;
  cfg.tex_resolution = 32;
  cfg.attention_resolutions = {8};
  cfg.seed = 1234;
  return cfg;
}

double max_fg_error(const Image& z, const RenderedMaps& maps, const TargetFn& g)
{
  double worst = 0.0;
  std::vector<float> want(z.channels());
  for (int y = 0; y < z.height(); ++y) {
    for (int x = 0; x < z.width(); ++x) {
      if (!maps.fg_mask(x, y)) {
        continue;
      }
      g({maps.position(x, y, 0), maps.position(x, y, 1), maps.position(x, y, 2)}, want);
      for (int c = 0; c < z.channels(); ++c) {
        worst = std::max(worst, std::abs(double(z(x, y, c)) - want[c]));
      }
    }
  }
  return worst;
}

class FailingBackend : public DenoiseBackend {
public:
  explicit FailingBackend(int fail_at, bool short_reply = false) : fail_at_(fail_at), short_(short_reply) {}
  DenoiseResponse denoise(const DenoiseRequest& req) override
  {
    if (req.step_index == fail_at_) {
      if (short_) {
        return {std::vector<Image>(1, req.latents[0]), "short"};
      }
      fail(ErrorCode::backend, "boom");
    }
    return {req.latents, "echo"};
  }
  std::string name() const override { return "failing"; }

private:
  int fail_at_;
  bool short_;
};

}  // namespace

TEST(Pipeline, MergeOnlyAtFirstStepWhenSixSteps)
{
  const Mesh sphere = make_icosphere(2);
  SyntheticDenoiser backend(position_ramp());
  const auto res = run_pipeline(sphere, make_camera_ring(2, 2.0, 35.0, 32), backend, small_config(6));
  ASSERT_EQ(res.trace.size(), 6u);
  EXPECT_TRUE(res.trace[0].merged);
  for (int i = 1; i < 6; ++i) {
    EXPECT_FALSE(res.trace[i].merged) << i;
  }
  EXPECT_EQ(res.trace[0].t, 6);
  EXPECT_EQ(res.trace[5].t, 1);
  EXPECT_EQ(backend.calls(), 6);
}

TEST(Pipeline, TraceCarriesModesAndWeights)
{
  const Mesh sphere = make_icosphere(2);
  SyntheticDenoiser backend(position_ramp());
  auto cfg = small_config(10);
  cfg.trace_textures = true;
  int callbacks = 0;
  const auto res = run_pipeline(sphere, make_camera_ring(4, 2.0, 35.0, 32), backend, cfg,
                                [&](const StepTrace&) { ++callbacks; });
  EXPECT_EQ(callbacks, 10);
  for (const auto& st : res.trace) {
    EXPECT_EQ(st.mode, st.step_index < 3 ? AttentionMode::replace : AttentionMode::reweigh);
    if (st.merged) {
      ASSERT_EQ(st.omegas.size(), 4u);
      EXPECT_GT(st.merged_texels, 0u);
      EXPECT_EQ(st.texture.resolution(), 32);
    } else {
      EXPECT_TRUE(st.omegas.empty());
    }
  }
  for (double w : res.trace[0].omegas) {
    EXPECT_DOUBLE_EQ(w, 1.0);
  }
  // Side view at 90 degrees: halfway down the ramp towards the floor. |cos| keeps the back view at 1.
  EXPECT_NEAR(res.trace[4].omegas[1], 1.0 + (1e-3 - 1.0) * 4.0 / 8.0, 1e-9);
  EXPECT_DOUBLE_EQ(res.trace[4].omegas[0], 1.0);
  EXPECT_NEAR(res.trace[4].omegas[2], 1.0, 1e-12);
}

TEST(Pipeline, SameSeedIsBitIdentical)
{
  const Mesh sphere = make_icosphere(2);
  const auto cams = make_camera_ring(3, 2.0, 35.0, 32);
  SyntheticDenoiser a(position_ramp());
  SyntheticDenoiser b(position_ramp());
  const auto ra = run_pipeline(sphere, cams, a, small_config());
  const auto rb = run_pipeline(sphere, cams, b, small_config());
  for (int n = 0; n < 3; ++n) {
    EXPECT_EQ(ra.latents[n].data(), rb.latents[n].data());
  }
  EXPECT_EQ(ra.texture.data.data(), rb.texture.data.data());

  auto other = small_config();
  other.seed = 99;
  SyntheticDenoiser c(position_ramp());
  EXPECT_NE(run_pipeline(sphere, cams, c, other).latents[0].data(), ra.latents[0].data());
}

TEST(Pipeline, RepeatedCameraMatchesSingleView)
{
  const Mesh sphere = make_icosphere(2);
  const ViewCamera cam{30.0, 10.0, 2.0, 35.0, 32};
  SyntheticDenoiser a(position_ramp());
  SyntheticDenoiser b(position_ramp());
  auto cfg = small_config(10);
  cfg.trace_textures = true;
  const auto one = run_pipeline(sphere, {cam}, a, cfg);
  const auto three = run_pipeline(sphere, {cam, cam, cam}, b, cfg);
  // View 0 draws from the same noise stream in both runs; the merge of identical partials
  // leaves the estimate unchanged up to float rounding.
  for (std::size_t i = 0; i < one.latents[0].size(); ++i) {
    EXPECT_NEAR(three.latents[0].data()[i], one.latents[0].data()[i], 1e-5);
  }
  for (std::size_t s = 0; s < one.trace.size(); ++s) {
    for (std::size_t i = 0; i < one.trace[s].texture.data.size(); ++i) {
      EXPECT_NEAR(three.trace[s].texture.data.data()[i], one.trace[s].texture.data.data()[i], 1e-5);
    }
  }
}

TEST(Pipeline, SyntheticTargetIsReproducedInEveryView)
{
  const Mesh sphere = make_icosphere(3);
  const auto cams = make_camera_ring(4, 2.0, 35.0, 32);
  SyntheticDenoiser backend(position_ramp());
  auto cfg = small_config(25);
  const auto res = run_pipeline(sphere, cams, backend, cfg);
  const auto prep = prepare_views(sphere, cams, cfg);
  for (int n = 0; n < 4; ++n) {
    EXPECT_LT(max_fg_error(res.latents[n], prep.geometry.views[n].maps, position_ramp()), 0.05) << "view " << n;
  }
}

TEST(Pipeline, CrossViewConsistency)
{
  const Mesh sphere = make_icosphere(3);
  const auto cams = make_camera_ring(4, 2.0, 35.0, 32);
  SyntheticDenoiser backend(position_ramp());
  auto cfg = small_config(25);
  const auto res = run_pipeline(sphere, cams, backend, cfg);
  const auto prep = prepare_views(sphere, cams, cfg);
  int pairs = 0;
  for (int a = 0; a < 4; ++a) {
    const int b = (a + 1) % 4;
    const auto& ma = prep.geometry.views[a].maps;
    const auto& mb = prep.geometry.views[b].maps;
    for (int ya = 0; ya < 32; ++ya) {
      for (int xa = 0; xa < 32; ++xa) {
        if (!ma.fg_mask(xa, ya)) {
          continue;
        }
        const Vec3 pa{ma.position(xa, ya, 0), ma.position(xa, ya, 1), ma.position(xa, ya, 2)};
        for (int yb = 0; yb < 32; ++yb) {
          for (int xb = 0; xb < 32; ++xb) {
            if (!mb.fg_mask(xb, yb)) {
              continue;
            }
            const Vec3 pb{mb.position(xb, yb, 0), mb.position(xb, yb, 1), mb.position(xb, yb, 2)};
            if (distance(pa, pb) > 0.005) {
              continue;
            }
            ++pairs;
            for (int c = 0; c < 3; ++c) {
              EXPECT_LT(std::abs(res.latents[a](xa, ya, c) - res.latents[b](xb, yb, c)), 0.05);
            }
          }
        }
      }
    }
  }
  EXPECT_GT(pairs, 10);
}

TEST(Pipeline, BackendErrorsCarryStepContext)
{
  const Mesh sphere = make_icosphere(1);
  FailingBackend backend(2);
  try {
    run_pipeline(sphere, make_camera_ring(2, 2.0, 35.0, 32), backend, small_config(5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::backend);
    EXPECT_NE(std::string(e.what()).find("step 2 (t=3)"), std::string::npos) << e.what();
  }
  FailingBackend short_reply(0, true);
  try {
    run_pipeline(sphere, make_camera_ring(2, 2.0, 35.0, 32), short_reply, small_config(5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::backend);
  }
}

TEST(Pipeline, ConfigValidation)
{
  const Mesh sphere = make_icosphere(1);
  SyntheticDenoiser backend(position_ramp());
  auto cfg = small_config();
  cfg.attention_resolutions = {12};
  EXPECT_THROW(run_pipeline(sphere, make_camera_ring(2, 2.0, 35.0, 32), backend, cfg), Error);
  cfg = small_config();
  cfg.prompt_suffixes = {"front"};
  try {
    run_pipeline(sphere, make_camera_ring(2, 2.0, 35.0, 32), backend, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_THROW(run_pipeline(sphere, {}, backend, small_config()), Error);
}

TEST(NoiseStreams, DistinctAndReproducible)
{
  auto a = noise_stream(7, 0);
  auto b = noise_stream(7, 0);
  auto c = noise_stream(7, 1);
  const auto ia = gaussian_image(4, 4, 1, a);
  EXPECT_EQ(ia.data(), gaussian_image(4, 4, 1, b).data());
  EXPECT_NE(ia.data(), gaussian_image(4, 4, 1, c).data());
}
