#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dfetrack/error.hpp"
#include "dfetrack/flow_lk.hpp"
#include "support.hpp"

using namespace dfetrack;
using namespace dfetrack::lk;
using testsupport::smooth_texture;
using testsupport::translate;

TEST(FlowWindow, DefaultsAndValidation) {
  FlowWindow w;
  EXPECT_EQ(w.size, 10);
  EXPECT_EQ(w.max_level, 4);
  EXPECT_EQ(w.max_iterations, 10);
  EXPECT_DOUBLE_EQ(w.epsilon, 0.03);
  EXPECT_NO_THROW(w.validate());
  EXPECT_THROW((FlowWindow{2, 4, 10, 0.03}.validate()), InvalidInput);
  EXPECT_THROW((FlowWindow{10, 5, 10, 0.03}.validate()), InvalidInput);
  EXPECT_THROW((FlowWindow{10, 4, 10, 0.0}.validate()), InvalidInput);
}

TEST(SpatialGradients, RampConstantAndProduct) {
  const int w = 20, h = 12;
  PlanarImage ramp(w, h, 1, ColorSpace::GRAY01), flat(w, h, 1, ColorSpace::GRAY01, 0.4),
      prod(w, h, 1, ColorSpace::GRAY01);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      ramp.at(x, y) = static_cast<double>(x) / w;
      prod.at(x, y) = x * y;
    }
  const Region r{1, 1, w - 2, h - 2};
  auto g = spatial_gradients(ramp, r);
  for (std::size_t i = 0; i < g.ix.size(); ++i) {
    EXPECT_NEAR(g.ix[i], 1.0 / w, 1e-15);
    EXPECT_EQ(g.iy[i], 0.0);
  }
  auto c = spatial_gradients(flat, r);
  for (std::size_t i = 0; i < c.ix.size(); ++i) {
    EXPECT_EQ(c.ix[i], 0.0);
    EXPECT_EQ(c.iy[i], 0.0);
  }
  auto p = spatial_gradients(prod, Region{3, 3, 1, 1});
  EXPECT_DOUBLE_EQ(p.ix[0], 3.0);
  EXPECT_DOUBLE_EQ(p.iy[0], 3.0);
  const auto q = gradient_at(prod, {3.0, 3.0});
  EXPECT_DOUBLE_EQ(q.ix, 3.0);
  EXPECT_DOUBLE_EQ(q.iy, 3.0);
  EXPECT_THROW(spatial_gradients(ramp, Region{0, 1, 3, 3}), BorderError);
  EXPECT_THROW(spatial_gradients(ramp, Region{1, 1, w - 1, 3}), BorderError);
}

TEST(EigenRatio, Examples) {
  EXPECT_DOUBLE_EQ(eigen_ratio({1, 0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(eigen_ratio({4, 0, 1}), 4.0);
  // A pure vertical edge has gradients only along x.
  EXPECT_EQ(eigen_ratio({7.5, 0, 0}), std::numeric_limits<double>::infinity());
  EXPECT_NEAR(eigen_ratio({2, 1, 2}), 3.0, 1e-12);
}

TEST(LkStep, ZeroMotionConvergesImmediately) {
  const auto img = smooth_texture(64, 64, 11);
  FlowWindow win;
  auto r = lk_step(img, img, {32, 32}, {32, 32}, win);
  EXPECT_EQ(r.status, FlowStatus::Converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_NEAR(r.displacement.x, 0.0, 1e-12);
  EXPECT_NEAR(r.displacement.y, 0.0, 1e-12);
}

TEST(LkStep, HalfPixelShift) {
  const auto img = smooth_texture(64, 64, 12);
  const auto moved = translate(img, 0.5, 0.0);
  auto r = lk_step(img, moved, {32, 32}, {32, 32}, FlowWindow{});
  EXPECT_LT(distance(r.displacement, {0.5, 0.0}), 0.05);
}

TEST(LkStep, ConstantRegionIsSingular) {
  PlanarImage flat(40, 40, 1, ColorSpace::GRAY01, 0.5);
  auto r = lk_step(flat, flat, {20, 20}, {20, 20}, FlowWindow{});
  EXPECT_EQ(r.status, FlowStatus::Singular);
}

TEST(LkStep, WindowOutsideImage) {
  const auto img = smooth_texture(40, 40, 13);
  auto r = lk_step(img, img, {3, 20}, {3, 20}, FlowWindow{});
  EXPECT_EQ(r.status, FlowStatus::OutOfBounds);
  auto r2 = lk_step(img, img, {20, 20}, {38, 20}, FlowWindow{});
  EXPECT_EQ(r2.status, FlowStatus::OutOfBounds);
  EXPECT_THROW(lk_step(testsupport::gray_to_rgb(img), img, {20, 20}, {20, 20}, FlowWindow{}), InvalidInput);
}

namespace {

// Synthetic skin texture (no blob) shifted by t between two frames.
std::pair<PlanarImage, PlanarImage> shifted_pair(int size, Point2d t, std::uint64_t seed) {
  auto spec = synth::SynthSpec::centered(size, size, 2, seed);
  spec.blob.depth = 0.0;
  spec.motion.kind = synth::MotionPath::Kind::Explicit;
  spec.motion.points = {{0.0, 0.0}, t};
  auto seq = synth::generate(spec);
  return {to_grayscale(seq.frames[0]), to_grayscale(seq.frames[1])};
}

}  // namespace

// Property: small translations are recovered without a pyramid.
TEST(LkStep, ShiftRecoveryOverSeeds) {
  FlowWindow win;
  win.max_level = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CounterRng rng(hash_combine(77, seed));
    const double r = 0.5 * std::sqrt(rng.uniform()), th = rng.uniform(0, 2 * M_PI);
    const Point2d t{r * std::cos(th), r * std::sin(th)};
    const auto [img, moved] = shifted_pair(64, t, seed);
    const Point2d p{rng.uniform(24, 40), rng.uniform(24, 40)};
    auto res = lk_step(img, moved, p, p, win);
    EXPECT_LT(distance(res.displacement, t), 0.05) << "seed " << seed << " t " << t;
    if (res.status == FlowStatus::Converged) {
      ASSERT_FALSE(res.increments.empty());
      EXPECT_LT(res.increments.back(), win.epsilon);
    }
  }
}

TEST(LkStep, ForwardBackwardSymmetry) {
  FlowWindow win;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = smooth_texture(64, 64, 2000 + seed);
    const auto b = translate(a, 0.3, -0.2);
    const Point2d p{32, 30};
    auto fwd = lk_step(a, b, p, p, win);
    auto back = lk_step(b, a, fwd.position, fwd.position, win);
    EXPECT_LT(distance(back.position, p), 0.1) << seed;
  }
}

TEST(LkPyramidal, LargeTranslation) {
  const auto img = smooth_texture(200, 200, 21, 3.0);
  const auto moved = translate(img, 8.0, -6.0);
  auto r = lk_pyramidal(img, moved, {100, 100}, FlowWindow{});
  EXPECT_LT(distance(r.displacement, {8.0, -6.0}), 0.5) << r.displacement;
  // 200 px leaves a 12 px top level, too small for the window at p.
  EXPECT_EQ(r.start_level, 3);
  EXPECT_EQ(r.level_estimates.size(), 4u);
}

TEST(LkPyramidal, ZeroMotionKeepsEveryLevelEstimate) {
  const auto img = smooth_texture(320, 320, 22, 3.0);
  const Point2d p{161.0, 157.5};
  auto r = lk_pyramidal(img, img, p, FlowWindow{});
  EXPECT_EQ(r.start_level, 4);
  EXPECT_NEAR(r.displacement.x, 0.0, 1e-9);
  EXPECT_NEAR(r.displacement.y, 0.0, 1e-9);
  ASSERT_EQ(r.level_estimates.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    const int level = 4 - i;
    const Point2d want = pyramid_coords(p, level);
    EXPECT_NEAR(r.level_estimates[i].x, want.x, 1e-9) << level;
    EXPECT_NEAR(r.level_estimates[i].y, want.y, 1e-9) << level;
  }
}

TEST(LkPyramidal, UnitShiftAtBothDepths) {
  const auto img = smooth_texture(200, 200, 23, 3.0);
  const auto moved = translate(img, 1.0, 0.0);
  FlowWindow shallow;
  shallow.max_level = 0;
  auto r0 = lk_pyramidal(img, moved, {100, 100}, shallow);
  auto r4 = lk_pyramidal(img, moved, {100, 100}, FlowWindow{});
  EXPECT_LT(distance(r0.displacement, {1, 0}), 0.1) << r0.displacement;
  EXPECT_LT(distance(r4.displacement, {1, 0}), 0.1) << r4.displacement;
}

TEST(LkPyramidal, TooSmallForDepth) {
  const auto img = smooth_texture(16, 16, 24);
  EXPECT_THROW(lk_pyramidal(img, img, {8, 8}, FlowWindow{}), InvalidInput);
}
