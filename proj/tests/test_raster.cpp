#include <gtest/gtest.h>

#include <random>

#include "mvtex/primitives.hpp"
#include "mvtex/raster.hpp"
#include "support/oracles.hpp"

using namespace mvtex;

namespace {

Mesh front_quad(double half, double z = 0.0)
{
  return make_quad({Vec3{-half, -half, z}, Vec3{half, -half, z}, Vec3{half, half, z}, Vec3{-half, half, z}},
                   {Vec2{0, 0}, Vec2{1, 0}, Vec2{1, 1}, Vec2{0, 1}});
}

ViewCamera front(int res) { return ViewCamera{0.0, 0.0, 2.0, 35.0, res}; }

}  // namespace

TEST(CameraRing, Azimuths)
{
  const auto eight = make_camera_ring(8, 2.0, 35.0, 64);
  ASSERT_EQ(eight.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_DOUBLE_EQ(eight[i].azimuth, 45.0 * i);
    EXPECT_DOUBLE_EQ(eight[i].elevation, 0.0);
    EXPECT_DOUBLE_EQ(eight[i].distance, 2.0);
  }
  const auto one = make_camera_ring(1, 2.0, 35.0, 64);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].azimuth, 0.0);
  const auto four = make_camera_ring(4, 2.0, 35.0, 64);
  EXPECT_DOUBLE_EQ(four[3].azimuth, 270.0);
}

TEST(CameraRing, InvalidCameraRejected)
{
  EXPECT_THROW((ViewCamera{0, 0, 0.0, 35, 64}.validate()), Error);
  EXPECT_THROW((ViewCamera{0, 0, 2.0, 180, 64}.validate()), Error);
  EXPECT_THROW((ViewCamera{0, 0, 2.0, 35, 0}.validate()), Error);
  EXPECT_THROW(make_camera_ring(0, 2.0, 35.0, 64), Error);
}

TEST(RenderMaps, HeadOnTriangleHasUnitCosine)
{
  const Mesh tri = make_mesh({{-0.5, -0.5, 0}, {0.5, -0.5, 0}, {0, 0.5, 0}}, {{0, 1, 2}},
                             {{Vec2{0, 0}, Vec2{1, 0}, Vec2{0.5, 1}}});
  const auto maps = render_maps(tri, front(64));
  int fg = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (maps.fg_mask(x, y)) {
        ++fg;
        // The cosine is measured against each pixel's own view ray.
        const auto ray = oracle::pixel_ray(maps.camera, x, y);
        EXPECT_NEAR(maps.cosine(x, y), -ray.dir.z, 1e-6);
        EXPECT_NEAR(maps.normal(x, y, 2), 1.0, 1e-6);
      } else {
        EXPECT_EQ(maps.face_id(x, y), kNoFace);
        EXPECT_EQ(maps.cosine(x, y), 0.0f);
        EXPECT_EQ(maps.position(x, y, 0), 0.0f);
      }
    }
  }
  EXPECT_GT(fg, 100);
}

TEST(RenderMaps, MatchesRayCastOracle)
{
  std::vector<std::pair<Mesh, ViewCamera>> cases;
  cases.push_back({make_mesh({{-0.5, -0.5, 0}, {0.5, -0.5, 0}, {0, 0.5, 0}}, {{0, 1, 2}},
                             {{Vec2{0, 0}, Vec2{1, 0}, Vec2{0.5, 1}}}),
                   front(64)});
  cases.push_back({make_icosphere(1), ViewCamera{30.0, 20.0, 2.0, 35.0, 64}});
  cases.push_back({make_cube(), ViewCamera{45.0, 35.0, 2.0, 35.0, 64}});
  for (const auto& [mesh, cam] : cases) {
    const auto maps = render_maps(mesh, cam);
    int checked = 0;
    for (int y = 0; y < cam.resolution; ++y) {
      for (int x = 0; x < cam.resolution; ++x) {
        const auto hit = oracle::raycast(mesh, oracle::pixel_ray(cam, x, y));
        if (hit.face < 0) {
          // Pixels exactly on an outline may go either way; require background only
          // when the oracle misses with some margin.
          EXPECT_TRUE(!maps.fg_mask(x, y) || maps.face_id(x, y) >= 0);
          if (maps.fg_mask(x, y)) {
            continue;
          }
          continue;
        }
        ASSERT_TRUE(maps.fg_mask(x, y)) << "pixel " << x << "," << y;
        const Vec3 p{maps.position(x, y, 0), maps.position(x, y, 1), maps.position(x, y, 2)};
        EXPECT_LT(distance(p, hit.p), 1e-4) << "pixel " << x << "," << y;
        EXPECT_GT(maps.depth(x, y), 0.0f);
        ++checked;
      }
    }
    EXPECT_GT(checked, 50);
  }
}

TEST(RenderMaps, DepthBufferPicksNearestFace)
{
  const Mesh scene = merge_meshes({front_quad(0.3, -0.2), front_quad(0.15, 0.2)});
  const auto maps = render_maps(scene, front(32));
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const auto hit = oracle::raycast(scene, oracle::pixel_ray(maps.camera, x, y));
      if (hit.face >= 0) {
        EXPECT_EQ(maps.face_id(x, y) / 2, hit.face / 2) << x << "," << y;
      }
    }
  }
}

TEST(RenderMaps, EmptyForegroundWhenFacingAway)
{
  const Mesh quad = front_quad(0.3);
  const auto maps = render_maps(quad, ViewCamera{180.0, 0.0, 2.0, 35.0, 16});
  for (auto m : maps.fg_mask.data()) {
    EXPECT_EQ(m, 0);
  }
}

TEST(RenderMaps, CosineInUnitIntervalAndPositiveDepth)
{
  const Mesh sphere = make_icosphere(2);
  for (const auto& cam : make_camera_ring(4, 2.0, 35.0, 48)) {
    const auto maps = render_maps(sphere, cam);
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 48; ++x) {
        EXPECT_GE(maps.cosine(x, y), 0.0f);
        EXPECT_LE(maps.cosine(x, y), 1.0f);
        EXPECT_EQ(maps.fg_mask(x, y) != 0, maps.face_id(x, y) != kNoFace);
        if (maps.fg_mask(x, y)) {
          EXPECT_GT(maps.depth(x, y), 0.0f);
        }
      }
    }
  }
}

TEST(RenderLatent, ConstantTexture)
{
  LatentTexture tex(16, 2);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      tex.valid(x, y) = 1;
      tex.data(x, y, 0) = 0.25f;
      tex.data(x, y, 1) = -2.0f;
    }
  }
  const Mesh sphere = make_icosphere(2);
  const auto maps = render_maps(sphere, ViewCamera{20.0, 10.0, 2.0, 35.0, 32});
  const Image img = render_latent(tex, maps);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      EXPECT_FLOAT_EQ(img(x, y, 0), maps.fg_mask(x, y) ? 0.25f : 0.0f);
      EXPECT_FLOAT_EQ(img(x, y, 1), maps.fg_mask(x, y) ? -2.0f : 0.0f);
    }
  }
}

TEST(RenderLatent, EmptyForegroundGivesZeros)
{
  LatentTexture tex(4, 3);
  tex.data.fill(1.0f);
  tex.valid.fill(1);
  const Image img = render_latent(tex, front_quad(0.3), ViewCamera{180.0, 0.0, 2.0, 35.0, 8}, 8);
  for (float v : img.data()) {
    EXPECT_EQ(v, 0.0f);
  }
}

TEST(RenderLatent, CheckerMatchesClosedFormBilinear)
{
  LatentTexture tex(2, 1);
  tex.valid.fill(1);
  tex.data(0, 0) = 1.0f;
  tex.data(1, 0) = 0.0f;
  tex.data(0, 1) = 0.0f;
  tex.data(1, 1) = 1.0f;
  const Mesh quad = front_quad(0.4);
  const ViewCamera cam = front(32);
  const auto maps = render_maps(quad, cam);
  const Image img = render_latent(tex, maps);
  int checked = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const auto hit = oracle::raycast(quad, oracle::pixel_ray(cam, x, y));
      if (hit.face < 0 || !maps.fg_mask(x, y)) {
        continue;
      }
      Vec2 uv{};
      for (int k = 0; k < 3; ++k) {
        uv = uv + quad.uvs[hit.face][k] * hit.bary[k];
      }
      // Texel centers at (i + 0.5) / 2; clamp-to-edge.
      const double tx = std::clamp(uv.x * 2.0 - 0.5, 0.0, 1.0);
      const double ty = std::clamp((1.0 - uv.y) * 2.0 - 0.5, 0.0, 1.0);
      const double expected = (1 - tx) * (1 - ty) * 1.0 + tx * ty * 1.0;
      EXPECT_NEAR(img(x, y), expected, 1e-4) << x << "," << y;
      ++checked;
    }
  }
  EXPECT_GT(checked, 100);
}

TEST(RenderLatent, ZeroChannelTextureRejected)
{
  LatentTexture tex(4, 0);
  EXPECT_THROW(render_latent(tex, render_maps(front_quad(0.3), front(8))), Error);
}

TEST(InverseRender, ConstantImageOnFrontQuad)
{
  const Mesh quad = front_quad(0.4);
  Image img(32, 32, 3);
  img.fill(0.7f);
  const auto tex = inverse_render(img, quad, front(32), 16);
  int covered = 0;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (tex.valid(x, y)) {
        ++covered;
        for (int c = 0; c < 3; ++c) {
          EXPECT_NEAR(tex.data(x, y, c), 0.7f, 1e-6);
        }
      } else {
        EXPECT_EQ(tex.data(x, y, 0), 0.0f);
      }
    }
  }
  EXPECT_GT(covered, 150);
}

TEST(InverseRender, OccludedTexelsAreNotCovered)
{
  // Back quad (UV left half) fully hidden behind a larger front quad (UV right half).
  const Mesh back = make_quad({Vec3{-0.2, -0.2, -0.3}, Vec3{0.2, -0.2, -0.3}, Vec3{0.2, 0.2, -0.3}, Vec3{-0.2, 0.2, -0.3}},
                              {Vec2{0.05, 0.05}, Vec2{0.45, 0.05}, Vec2{0.45, 0.95}, Vec2{0.05, 0.95}});
  const Mesh fore = make_quad({Vec3{-0.4, -0.4, 0.2}, Vec3{0.4, -0.4, 0.2}, Vec3{0.4, 0.4, 0.2}, Vec3{-0.4, 0.4, 0.2}},
                              {Vec2{0.55, 0.05}, Vec2{0.95, 0.05}, Vec2{0.95, 0.95}, Vec2{0.55, 0.95}});
  const Mesh scene = merge_meshes({back, fore});
  const auto uv = render_uv_space_maps(scene, 32);
  const auto view = render_maps(scene, front(64));
  const auto proj = project_texels(scene, uv, view);
  int back_texels = 0;
  int fore_covered = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const int f = uv.face_id(x, y);
      if (f == 0 || f == 1) {
        ++back_texels;
        EXPECT_EQ(proj.covered(x, y), 0) << x << "," << y;
      } else if (f >= 2) {
        fore_covered += proj.covered(x, y);
      }
    }
  }
  EXPECT_GT(back_texels, 50);
  EXPECT_GT(fore_covered, 50);
}

TEST(InverseRender, ResolutionMismatch)
{
  Image img(16, 16, 1);
  try {
    inverse_render(img, front_quad(0.3), front(32), 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::resolution_mismatch);
  }
}

TEST(InverseRender, ConstantTextureRoundTrip)
{
  for (const Mesh& mesh : {make_icosphere(3), make_cube()}) {
    const auto uv = render_uv_space_maps(mesh, 64);
    LatentTexture tex(64, 1);
    tex.valid.fill(1);
    tex.data.fill(0.375f);
    for (const auto& cam : make_camera_ring(4, 2.0, 35.0, 64)) {
      const auto view = render_maps(mesh, cam);
      const auto proj = project_texels(mesh, uv, view);
      const auto back = inverse_render(render_latent(tex, view), view, proj);
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          if (proj.covered(x, y)) {
            EXPECT_NEAR(back.data(x, y), 0.375f, 1e-3);
          }
        }
      }
    }
  }
}

TEST(InverseRender, CoverageRequiresFacingCamera)
{
  const Mesh sphere = make_icosphere(3);
  const auto uv = render_uv_space_maps(sphere, 64);
  const auto view = render_maps(sphere, front(64));
  const auto proj = project_texels(sphere, uv, view);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (proj.covered(x, y)) {
        EXPECT_GT(proj.cosine(x, y), 0.0f);
        EXPECT_GT(uv.position_at(x, y).z, -0.1);  // nothing from the far side
      }
    }
  }
}

TEST(UvMaps, TriangleInCorner)
{
  const Mesh tri = make_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}, {{Vec2{0, 0}, Vec2{0.55, 0}, Vec2{0, 0.55}}});
  const auto uv = render_uv_space_maps(tri, 8);
  int inside = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const Vec2 c = texel_center_uv(x, y, 8);
      const bool expect = c.x + c.y < 0.55;
      EXPECT_EQ(uv.face_id(x, y) == 0, expect) << x << "," << y;
      inside += expect;
      if (expect) {
        // Position interpolates linearly: p = uv / 0.55.
        EXPECT_NEAR(uv.position(x, y, 0), c.x / 0.55, 1e-6);
        EXPECT_NEAR(uv.position(x, y, 1), c.y / 0.55, 1e-6);
      }
    }
  }
  EXPECT_EQ(inside, 10);
  EXPECT_EQ(uv.face_id(7, 0), kNoFace);
}

TEST(UvMaps, CoverageMatchesBruteForceScan)
{
  const Mesh sphere = make_icosphere(3);
  for (int res : {64, 128}) {
    const auto uv = render_uv_space_maps(sphere, res);
    int strict = 0;
    int loose = 0;
    int valid = 0;
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const Vec2 c = texel_center_uv(x, y, res);
        bool in_strict = false;
        bool in_loose = false;
        for (std::size_t f = 0; f < sphere.faces.size(); ++f) {
          const auto& t = sphere.uvs[f];
          in_strict = in_strict || oracle::uv_inside(c, t[0], t[1], t[2], false);
          in_loose = in_loose || oracle::uv_inside(c, t[0], t[1], t[2], true);
        }
        strict += in_strict;
        loose += in_loose;
        const int f = uv.face_id(x, y);
        if (f != kNoFace) {
          ++valid;
          const auto& t = sphere.uvs[f];
          EXPECT_TRUE(oracle::uv_inside(c, t[0], t[1], t[2], true));
          EXPECT_NEAR(length(uv.normal_at(x, y)), 1.0, 1e-5);
        }
      }
    }
    EXPECT_LE(strict, valid);
    EXPECT_LE(valid, loose);
    EXPECT_EQ(uv.overlap_texels, 0u);
  }
}

TEST(UvMaps, OverlapIsReported)
{
  const Mesh a = front_quad(0.3, 0.0);
  const Mesh b = front_quad(0.3, 0.1);
  const auto uv = render_uv_space_maps(merge_meshes({a, b}), 16);
  EXPECT_GT(uv.overlap_texels, 0u);
}

TEST(Downsample, ConstantBlockAndBackground)
{
  const Mesh quad = front_quad(0.2);
  const auto maps = render_maps(quad, front(32));
  const auto small = downsample_maps(maps, 4);
  ASSERT_EQ(small.resolution(), 8);
  EXPECT_EQ(small.fg_mask(0, 0), 0);
  EXPECT_EQ(small.position(0, 0, 0), 0.0f);
  EXPECT_EQ(small.fg_mask(4, 4), 1);
  EXPECT_THROW(downsample_maps(maps, 5), Error);
}

TEST(Downsample, HalfForegroundBlockAveragesForegroundOnly)
{
  RenderedMaps m;
  m.camera = front(2);
  m.position = Image(2, 2, 3);
  m.normal = Image(2, 2, 3);
  m.depth = Image(2, 2, 1);
  m.cosine = Image(2, 2, 1);
  m.uv = Image(2, 2, 2);
  m.fg_mask = Mask(2, 2, 1, 0);
  m.face_id = IdMap(2, 2, 1, kNoFace);
  m.fg_mask(0, 0) = 1;
  m.fg_mask(1, 0) = 1;
  m.face_id(0, 0) = 3;
  m.face_id(1, 0) = 4;
  m.position(0, 0, 0) = 0.1f;
  m.position(1, 0, 0) = 0.3f;
  m.normal(0, 0, 2) = 1.0f;
  m.normal(1, 0, 0) = 1.0f;
  const auto s = downsample_maps(m, 2);
  EXPECT_EQ(s.fg_mask(0, 0), 1);
  EXPECT_NEAR(s.position(0, 0, 0), 0.2f, 1e-7);
  EXPECT_NEAR(s.normal(0, 0, 0), std::sqrt(0.5), 1e-6);
  EXPECT_NEAR(s.normal(0, 0, 2), std::sqrt(0.5), 1e-6);
  EXPECT_EQ(s.face_id(0, 0), 3);
}
