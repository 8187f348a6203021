#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mvtex/attention.hpp"
#include "mvtex/primitives.hpp"

using namespace mvtex;

namespace {

// One-patch maps at resolution 1; nullopt is background.
RenderedMaps patch(std::optional<Vec3> p)
{
  RenderedMaps m;
  m.camera = ViewCamera{0, 0, 2, 35, 1};
  m.position = Image(1, 1, 3);
  m.normal = Image(1, 1, 3);
  m.depth = Image(1, 1, 1);
  m.cosine = Image(1, 1, 1);
  m.uv = Image(1, 1, 2);
  m.fg_mask = Mask(1, 1, 1, 0);
  m.face_id = IdMap(1, 1, 1, kNoFace);
  if (p) {
    m.fg_mask(0, 0) = 1;
    m.face_id(0, 0) = 0;
    m.position(0, 0, 0) = static_cast<float>(p->x);
    m.position(0, 0, 1) = static_cast<float>(p->y);
    m.position(0, 0, 2) = static_cast<float>(p->z);
  }
  return m;
}

std::vector<RenderedMaps> patches(const std::vector<std::optional<Vec3>>& pts)
{
  std::vector<RenderedMaps> out;
  for (const auto& p : pts) {
    out.push_back(patch(p));
  }
  return out;
}

Matrix row(std::vector<float> v)
{
  Matrix m(1, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), m.data().begin());
  return m;
}

std::vector<RenderedMaps> sphere_views(int n, int res)
{
  const Mesh sphere = make_icosphere(3);
  std::vector<RenderedMaps> out;
  for (const auto& cam : make_camera_ring(n, 2.0, 35.0, res)) {
    out.push_back(render_maps(sphere, cam));
  }
  return out;
}

}  // namespace

TEST(PairwiseDistance, SamePixelIsZero)
{
  const auto m = patch(Vec3{0.1, 0.2, 0.3});
  const auto d = pairwise_distance(m, std::vector<RenderedMaps>{m});
  EXPECT_EQ(d.entries(0, 0), 0.0f);
}

TEST(PairwiseDistance, HandEuclidean)
{
  const auto d = pairwise_distance(patch(Vec3{0.1, 0, 0}), patches({Vec3{-0.1, 0, 0}}));
  EXPECT_NEAR(d.entries(0, 0), 0.2, 1e-7);
}

TEST(PairwiseDistance, ShapeIsQueryByConcatenatedKeys)
{
  const auto d = pairwise_distance(patch(Vec3{0, 0, 0}), patches({Vec3{0, 0, 0}, std::nullopt}));
  EXPECT_EQ(d.entries.rows(), 1);
  EXPECT_EQ(d.entries.cols(), 2);
  EXPECT_EQ(d.k_fg, (std::vector<std::uint8_t>{1, 0}));
}

TEST(PairwiseDistance, ResolutionMismatch)
{
  const auto views = sphere_views(1, 16);
  const auto small = downsample_maps(views[0], 2);
  try {
    pairwise_distance(views[0], std::vector<RenderedMaps>{small});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::resolution_mismatch);
  }
}

TEST(AttentionBias, ClosedFormValues)
{
  const BiasParams p;
  EXPECT_DOUBLE_EQ(bias_value(0.0, p), 0.0);
  EXPECT_NEAR(bias_value(0.05, p), -2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(bias_value(0.05, p), -1.3863, 1e-4);
  EXPECT_NEAR(bias_value(0.5, p), std::log(0.1), 1e-12);
  EXPECT_NEAR(bias_value(0.5, p), -2.3026, 1e-4);
}

TEST(AttentionBias, ClampOnset)
{
  const BiasParams p;
  const double d_star = clamp_onset_distance(p);
  EXPECT_NEAR(d_star, (std::sqrt(10.0) - 1.0) / 20.0, 1e-12);
  EXPECT_NEAR(d_star, 0.1081, 1e-4);
  EXPECT_NEAR(bias_value(d_star, p), std::log(0.1), 1e-9);
  EXPECT_GT(bias_value(d_star * 0.99, p), std::log(0.1));
  for (double d : {d_star * 1.01, 0.2, 0.5, 3.0}) {
    EXPECT_DOUBLE_EQ(bias_value(d, p), std::log(0.1));
  }
}

TEST(AttentionBias, CaseSplit)
{
  const auto k = patches({Vec3{0.05, 0, 0}, std::nullopt});
  const auto fg = attention_bias(pairwise_distance(patch(Vec3{0, 0, 0}), k), BiasParams{});
  const auto bg = attention_bias(pairwise_distance(patch(std::nullopt), k), BiasParams{});
  EXPECT_NEAR(fg.entries(0, 0), -2.0 * std::log(2.0), 1e-6);  // FG-FG
  EXPECT_TRUE(is_masked(fg.entries(0, 1)));                     // FG-BG
  EXPECT_TRUE(is_masked(bg.entries(0, 0)));                     // BG-FG
  EXPECT_EQ(bg.entries(0, 1), 0.0f);                            // BG-BG
}

TEST(AttentionBias, InvalidParamsRejected)
{
  EXPECT_THROW((BiasParams{0.0, 20.0, 0.1}.validate()), Error);
  EXPECT_THROW((BiasParams{2.0, -1.0, 0.1}.validate()), Error);
  EXPECT_THROW((BiasParams{2.0, 20.0, 0.0}.validate()), Error);
  EXPECT_THROW((BiasParams{2.0, 20.0, 1.5}.validate()), Error);
}

TEST(AttentionBias, EntriesBoundedAndMonotone)
{
  const BiasParams p;
  double prev = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double d = i * 0.001;
    const double b = bias_value(d, p);
    EXPECT_LE(b, 0.0);
    EXPECT_GE(b, std::log(p.delta));
    EXPECT_LE(b, prev);
    prev = b;
  }
}

TEST(Softmax, ZeroBiasIsPlainAttention)
{
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n;
  Matrix s(4, 6);
  Matrix v(6, 2);
  for (auto& x : s.data()) {
    x = n(rng);
  }
  for (auto& x : v.data()) {
    x = n(rng);
  }
  BiasMatrix w;
  w.entries = Matrix(4, 6);
  const Matrix a = reweigh_attention(s, w, v);
  const Matrix b = matmul(softmax_rows(s), v);
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
  }
}

TEST(Softmax, HardMask)
{
  const Matrix p = reweighed_attention_weights(row({0, 0}), row({0, kMaskedBias}));
  EXPECT_EQ(p(0, 0), 1.0f);
  EXPECT_EQ(p(0, 1), 0.0f);
}

TEST(Softmax, HalfWeight)
{
  const Matrix p = reweighed_attention_weights(row({0, 0}), row({0, static_cast<float>(std::log(0.5))}));
  EXPECT_NEAR(p(0, 0), 2.0 / 3.0, 1e-6);
  EXPECT_NEAR(p(0, 1), 1.0 / 3.0, 1e-6);
}

TEST(ReplaceAttention, Examples)
{
  BiasMatrix equal;
  equal.entries = row({-0.7f, -0.7f});
  Matrix v(2, 1);
  v(0, 0) = 1.0f;
  v(1, 0) = 3.0f;
  EXPECT_NEAR(replace_attention(equal, v)(0, 0), 2.0, 1e-6);

  const Matrix p = softmax_rows(row({0.0f, static_cast<float>(std::log(0.1))}));
  EXPECT_NEAR(p(0, 0), 1.0 / 1.1, 1e-6);
  EXPECT_NEAR(p(0, 1), 0.1 / 1.1, 1e-6);
  EXPECT_NEAR(p(0, 0), 0.909, 1e-3);

  const Matrix single = softmax_rows(row({kMaskedBias, -1.5f, kMaskedBias}));
  EXPECT_EQ(single(0, 1), 1.0f);
  EXPECT_EQ(single(0, 0), 0.0f);
}

TEST(Softmax, AllMaskedRowIsAnError)
{
  try {
    softmax_rows(row({kMaskedBias, kMaskedBias}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::all_masked_row);
  }
}

TEST(Softmax, RowsSumToOne)
{
  const auto views = sphere_views(4, 32);
  const auto biases = build_view_biases(views, attended_views(4, AttendedMode::dense), {8}, BiasParams{});
  std::mt19937_64 rng(9);
  std::normal_distribution<float> n;
  for (const auto& per : biases.per_view) {
    const auto& w = per[0];
    Matrix s(w.entries.rows(), w.entries.cols());
    for (auto& x : s.data()) {
      x = n(rng);
    }
    for (const Matrix& p : {reweighed_attention_weights(s, w.entries), softmax_rows(w.entries)}) {
      for (int i = 0; i < p.rows(); ++i) {
        double sum = 0.0;
        for (float x : p.row(i)) {
          EXPECT_TRUE(std::isfinite(x));
          sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
      }
    }
  }
}

TEST(Softmax, MonotoneInDistance)
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  std::normal_distribution<float> n;
  const BiasParams p;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::optional<Vec3>> keys;
    for (int j = 0; j < 5; ++j) {
      keys.push_back(Vec3{u(rng), 0, 0});
    }
    const auto q = patch(Vec3{0, 0, 0});
    Matrix s(1, 5);
    for (auto& x : s.data()) {
      x = n(rng);
    }
    const auto before = reweighed_attention_weights(
        s, attention_bias(pairwise_distance(q, patches(keys)), p).entries);
    keys[2] = Vec3{keys[2]->x + 0.005, 0, 0};
    const auto after = reweighed_attention_weights(
        s, attention_bias(pairwise_distance(q, patches(keys)), p).entries);
    EXPECT_LT(after(0, 2), before(0, 2));
    for (int j : {0, 1, 3, 4}) {
      EXPECT_GE(after(0, j), before(0, j));
    }
  }
}

TEST(Softmax, EqualDistancesGiveEqualWeightsUnderReplace)
{
  const auto k = patches({Vec3{0.03, 0, 0}, Vec3{0, -0.03, 0}});
  const auto w = attention_bias(pairwise_distance(patch(Vec3{0, 0, 0}), k), BiasParams{});
  const Matrix p = softmax_rows(w.entries);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-6);
  EXPECT_NEAR(p(0, 1), 0.5, 1e-6);
}

TEST(AttendedViews, DenseAndNeighbors)
{
  const auto dense = attended_views(3, AttendedMode::dense);
  EXPECT_EQ(dense[1], (std::vector<int>{0, 1, 2}));
  const auto ring = attended_views(8, AttendedMode::neighbors, 1);
  EXPECT_EQ(ring[0], (std::vector<int>{0, 1, 7}));
  EXPECT_EQ(ring[4], (std::vector<int>{3, 4, 5}));
  const auto self = attended_views(8, AttendedMode::neighbors, 0);
  EXPECT_EQ(self[5], (std::vector<int>{5}));
}

TEST(ViewBiases, SelfOnlyEqualsSingleViewBias)
{
  const auto views = sphere_views(3, 32);
  const auto b = build_view_biases(views, attended_views(3, AttendedMode::neighbors, 0), {16}, BiasParams{});
  for (int n = 0; n < 3; ++n) {
    const auto small = downsample_maps(views[n], 2);
    const auto self = attention_bias(pairwise_distance(small, std::vector<RenderedMaps>{small}), BiasParams{});
    EXPECT_EQ(b.at(n, 16).entries, self.entries);
    EXPECT_EQ(b.at(n, 16).attended, std::vector<int>{n});
  }
}

TEST(ViewBiases, ShapesForTwoViewsTwoResolutions)
{
  const auto views = sphere_views(2, 32);
  const auto b = build_view_biases(views, attended_views(2, AttendedMode::dense), {8, 16}, BiasParams{});
  int count = 0;
  for (int n = 0; n < 2; ++n) {
    for (int res : {8, 16}) {
      const auto& w = b.at(n, res);
      EXPECT_EQ(w.entries.rows(), res * res);
      EXPECT_EQ(w.entries.cols(), 2 * res * res);
      EXPECT_EQ(w.resolution, res);
      EXPECT_EQ(w.view, n);
      ++count;
    }
  }
  EXPECT_EQ(count, 4);
  EXPECT_THROW(b.at(0, 4), Error);
}

TEST(ViewBiases, FiniteCountMatchesKeyForeground)
{
  const auto views = sphere_views(8, 32);
  const auto b = build_view_biases(views, attended_views(8, AttendedMode::dense), {16}, BiasParams{});
  std::size_t key_fg = 0;
  std::size_t key_total = 0;
  std::vector<Mask> small_fg;
  for (const auto& v : views) {
    const auto s = downsample_maps(v, 2);
    for (auto f : s.fg_mask.data()) {
      key_fg += f != 0;
      ++key_total;
    }
    small_fg.push_back(s.fg_mask);
  }
  for (int n = 0; n < 8; ++n) {
    const auto& w = b.at(n, 16);
    for (int i = 0; i < w.entries.rows(); ++i) {
      std::size_t finite = 0;
      for (float x : w.entries.row(i)) {
        finite += !is_masked(x);
      }
      const bool q_fg = small_fg[n].data()[i] != 0;
      EXPECT_EQ(finite, q_fg ? key_fg : key_total - key_fg);
    }
  }
}

TEST(ViewBiases, CrossViewTranspose)
{
  const auto views = sphere_views(4, 16);
  const auto a = downsample_maps(views[0], 2);
  const auto c = downsample_maps(views[1], 2);
  const auto ab = attention_bias(pairwise_distance(a, std::vector<RenderedMaps>{c}), BiasParams{});
  const auto ba = attention_bias(pairwise_distance(c, std::vector<RenderedMaps>{a}), BiasParams{});
  for (int i = 0; i < ab.entries.rows(); ++i) {
    for (int j = 0; j < ab.entries.cols(); ++j) {
      EXPECT_EQ(ab.entries(i, j), ba.entries(j, i));
    }
  }
}

TEST(ViewBiases, AttentionResolutionMustDivide)
{
  const auto views = sphere_views(2, 32);
  EXPECT_THROW(build_view_biases(views, attended_views(2, AttendedMode::dense), {12}, BiasParams{}), Error);
}
