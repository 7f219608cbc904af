#include <gtest/gtest.h>

#include <cmath>

#include "dfetrack/error.hpp"
#include "dfetrack/raster.hpp"
#include "dfetrack/rng.hpp"

using namespace dfetrack;

namespace {

// Separately coded reference conversion: matrix as rows of XYZ weights,
// pow() rather than cbrt(), and white normalisation folded into the rows.
std::array<double, 3> lab_oracle(double r, double g, double b) {
  const double m[3][3] = {{0.412453, 0.357580, 0.180423},
                          {0.212671, 0.715160, 0.072169},
                          {0.019334, 0.119193, 0.950227}};
  const double white[3] = {0.950456, 1.0, 1.088754};
  double t[3];
  for (int i = 0; i < 3; ++i) t[i] = (m[i][0] * r + m[i][1] * g + m[i][2] * b) / white[i];
  auto f = [](double v) { return v > 0.008856 ? std::pow(v, 1.0 / 3.0) : 7.787 * v + 16.0 / 116.0; };
  const double L = t[1] > 0.008856 ? 116.0 * std::pow(t[1], 1.0 / 3.0) - 16.0 : 903.3 * t[1];
  return {L, 500.0 * (f(t[0]) - f(t[1])), 200.0 * (f(t[1]) - f(t[2]))};
}

PlanarImage rgb_pixel(double r, double g, double b) {
  return PlanarImage(1, 1, 3, ColorSpace::RGB01, std::vector<double>{r, g, b});
}

}  // namespace

TEST(RgbToCielab, ReferenceWhiteAndBlack) {
  auto w = rgb_to_cielab(1, 1, 1);
  EXPECT_NEAR(w[0], 100.0, 1e-6);
  EXPECT_NEAR(w[1], 0.0, 1e-6);
  EXPECT_NEAR(w[2], 0.0, 1e-6);
  auto k = rgb_to_cielab(0, 0, 0);
  EXPECT_EQ(k[0], 0.0);
  EXPECT_EQ(k[1], 0.0);
  EXPECT_EQ(k[2], 0.0);
}

// Values computed once with an external scalar calculator and frozen.
TEST(RgbToCielab, FrozenValues) {
  struct Case {
    double r, g, b, L, a, bb;
  };
  const Case cases[] = {
      {0.5, 0.5, 0.5, 76.069261014156, 0.0, 0.0},
      {1, 0, 0, 53.240587943745, 80.094166834485, 67.201536995072},
      {0, 1, 0, 87.735099488319, -86.181257511044, 83.177477068452},
      {0, 0, 1, 32.295672565014, 79.187001803855, -107.861747252070},
      {0.2, 0.4, 0.6, 67.419303540535, -6.807149221723, -22.097567771082},
      {0.001, 0.002, 0.003, 1.679684543400, -0.403455859652, -1.550406730386},
      {0.9, 0.7, 0.6, 88.700699658156, 6.551371381369, 10.320291088368},
  };
  for (const auto& c : cases) {
    auto lab = rgb_to_cielab(c.r, c.g, c.b);
    EXPECT_NEAR(lab[0], c.L, 1e-9) << c.r << "," << c.g << "," << c.b;
    EXPECT_NEAR(lab[1], c.a, 1e-6);
    EXPECT_NEAR(lab[2], c.bb, 1e-6);
  }
}

TEST(RgbToCielab, MatchesScalarOracleOnRandomTriples) {
  CounterRng rng(2024);
  for (int i = 0; i < 1000; ++i) {
    // Mix in very dark triples so the linear branch gets exercised.
    const double s = (i % 10 == 0) ? 0.01 : 1.0;
    const double r = s * rng.uniform(), g = s * rng.uniform(), b = s * rng.uniform();
    auto got = rgb_to_cielab(r, g, b);
    auto want = lab_oracle(r, g, b);
    for (int c = 0; c < 3; ++c) ASSERT_NEAR(got[c], want[c], 1e-6) << i;
  }
}

TEST(RgbToCielab, ImageStaysInsideDeclaredBox) {
  CounterRng rng(7);
  PlanarImage img(17, 13, 3, ColorSpace::RGB01);
  for (int c = 0; c < 3; ++c)
    for (auto& v : img.plane(c)) v = rng.uniform();
  // Include saturated corners of the RGB cube.
  img.at(0, 0, 0) = 0; img.at(0, 0, 1) = 0; img.at(0, 0, 2) = 1;
  img.at(1, 0, 0) = 0; img.at(1, 0, 1) = 1; img.at(1, 0, 2) = 0;
  img.at(2, 0, 0) = 1; img.at(2, 0, 1) = 0; img.at(2, 0, 2) = 1;
  const auto lab = rgb_to_cielab(img);
  EXPECT_EQ(lab.space(), ColorSpace::CIELAB);
  for (double v : lab.plane(0)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 100.0);
  }
  for (int c = 1; c < 3; ++c)
    for (double v : lab.plane(c)) {
      EXPECT_GE(v, -127.0);
      EXPECT_LE(v, 127.0);
    }
  const auto n = normalize_lab(lab);
  for (double v : n.samples()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(RgbToCielab, RejectsWrongInput) {
  PlanarImage gray(2, 2, 1, ColorSpace::GRAY01);
  EXPECT_THROW(rgb_to_cielab(gray), InvalidInput);
  PlanarImage lab(2, 2, 3, ColorSpace::CIELAB);
  EXPECT_THROW(rgb_to_cielab(lab), InvalidInput);
}

TEST(NormalizeLab, FixedBounds) {
  PlanarImage lab(1, 1, 3, ColorSpace::CIELAB, std::vector<double>{50.0, 0.0, -127.0});
  auto n = normalize_lab(lab);
  EXPECT_EQ(n.space(), ColorSpace::LAB01);
  EXPECT_DOUBLE_EQ(n.at(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(n.at(0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(n.at(0, 0, 2), 0.0);
}

TEST(NormalizeLab, PreservesOrderPerChannel) {
  CounterRng rng(99);
  PlanarImage lab(50, 1, 3, ColorSpace::CIELAB);
  for (int x = 0; x < 50; ++x) {
    lab.at(x, 0, 0) = rng.uniform(0, 100);
    lab.at(x, 0, 1) = rng.uniform(-127, 127);
    lab.at(x, 0, 2) = rng.uniform(-127, 127);
  }
  auto n = normalize_lab(lab);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j)
        if (lab.at(i, 0, c) < lab.at(j, 0, c)) ASSERT_LT(n.at(i, 0, c), n.at(j, 0, c));
}

TEST(ToGrayscale, LightnessOverHundred) {
  EXPECT_NEAR(to_grayscale(rgb_pixel(1, 1, 1)).at(0, 0), 1.0, 1e-9);
  EXPECT_EQ(to_grayscale(rgb_pixel(0, 0, 0)).at(0, 0), 0.0);
  EXPECT_NEAR(to_grayscale(rgb_pixel(0.5, 0.5, 0.5)).at(0, 0), 0.76069261014156, 1e-9);
  auto g = to_grayscale(rgb_pixel(0.2, 0.4, 0.6));
  EXPECT_EQ(g.space(), ColorSpace::GRAY01);
  EXPECT_EQ(g.channels(), 1);
}

TEST(ToGrayscale, CielabPassThroughAndSingleChannelError) {
  PlanarImage lab(1, 1, 3, ColorSpace::CIELAB, std::vector<double>{42.0, 10.0, -5.0});
  EXPECT_DOUBLE_EQ(to_grayscale(lab).at(0, 0), 0.42);
  PlanarImage gray(3, 3, 1, ColorSpace::GRAY01);
  EXPECT_THROW(to_grayscale(gray), InvalidInput);
}

TEST(ExtractCrop, BoundaryAndCentre) {
  PlanarImage img(100, 100, 3, ColorSpace::RGB01);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; ++x) img.at(x, y, c) = (x + 100 * y + 10000 * c) / 40000.0;
  auto edge = extract_crop(img, {15, 15}, 31);
  EXPECT_EQ(edge.size, 31);
  EXPECT_EQ(edge.image.width(), 31);
  EXPECT_EQ(edge.image.at(0, 0, 2), img.at(0, 0, 2));
  EXPECT_EQ(edge.image.at(30, 30, 1), img.at(30, 30, 1));

  auto mid = extract_crop(img, {50, 50}, 31);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(mid.image.at(15, 15, c), img.at(50, 50, c));
  EXPECT_EQ(mid.center, (Pixel{50, 50}));
}

TEST(ExtractCrop, OutOfBoundsNamesCoordinate) {
  PlanarImage img(100, 100, 3, ColorSpace::RGB01);
  try {
    extract_crop(img, {14, 50}, 31);
    FAIL() << "expected BorderError";
  } catch (const BorderError& e) {
    EXPECT_NE(std::string(e.what()).find("14"), std::string::npos) << e.what();
  }
  EXPECT_THROW(extract_crop(img, {85, 50}, 31), BorderError);
  EXPECT_NO_THROW(extract_crop(img, {84, 84}, 31));
  EXPECT_THROW(extract_crop(img, {50, 50}, 30), InvalidInput);
}

TEST(DownsampleHalf, Dimensions) {
  PlanarImage img(420, 300, 1, ColorSpace::GRAY01, 0.3);
  auto d = downsample_half(img);
  EXPECT_EQ(d.width(), 210);
  EXPECT_EQ(d.height(), 150);
  PlanarImage odd(7, 5, 1, ColorSpace::GRAY01, 0.3);
  auto o = downsample_half(odd);
  EXPECT_EQ(o.width(), 3);
  EXPECT_EQ(o.height(), 2);
}

TEST(DownsampleHalf, ConstantIsExact) {
  for (double c : {0.0, 0.1, 0.37, 1.0}) {
    PlanarImage img(13, 9, 3, ColorSpace::RGB01, c);
    auto d = downsample_half(img);
    for (double v : d.samples()) ASSERT_EQ(v, c);
  }
}

// Brute force: prefilter every pixel with the 5x5 outer-product kernel
// under mirrored borders, then average 2x2 blocks.
TEST(DownsampleHalf, MatchesBruteForceOracle) {
  const int w = 4, h = 4;
  PlanarImage img(w, h, 1, ColorSpace::GRAY01);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = (x + 4 * y) / 15.0;
  const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  std::vector<double> blurred(w * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          s += k[dy + 2] * k[dx + 2] * img.at(mirror(x + dx, w), mirror(y + dy, h));
      blurred[y * w + x] = s;
    }
  auto d = downsample_half(img);
  ASSERT_EQ(d.width(), 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      const double want = 0.25 * (blurred[2 * y * w + 2 * x] + blurred[2 * y * w + 2 * x + 1] +
                                  blurred[(2 * y + 1) * w + 2 * x] + blurred[(2 * y + 1) * w + 2 * x + 1]);
      EXPECT_NEAR(d.at(x, y), want, 1e-12);
    }
}

TEST(DownsampleHalf, RejectsDegenerateInput) {
  PlanarImage thin(1, 10, 1, ColorSpace::GRAY01);
  EXPECT_THROW(downsample_half(thin), InvalidInput);
  PlanarImage flat(10, 1, 1, ColorSpace::GRAY01);
  EXPECT_THROW(downsample_half(flat), InvalidInput);
}

TEST(BuildPyramid, LevelDimensions) {
  PlanarImage img(420, 300, 1, ColorSpace::GRAY01, 0.5);
  auto pyr = build_pyramid(img, 4, 10);
  ASSERT_EQ(pyr.max_level(), 4);
  const int dims[5][2] = {{420, 300}, {210, 150}, {105, 75}, {52, 37}, {26, 18}};
  for (int l = 0; l <= 4; ++l) {
    EXPECT_EQ(pyr.levels[l].width(), dims[l][0]);
    EXPECT_EQ(pyr.levels[l].height(), dims[l][1]);
  }
  auto single = build_pyramid(img, 0, 10);
  ASSERT_EQ(single.levels.size(), 1u);
  EXPECT_EQ(single.levels[0].samples(), img.samples());
}

TEST(BuildPyramid, TooDeepThrows) {
  PlanarImage img(16, 16, 1, ColorSpace::GRAY01, 0.5);
  EXPECT_THROW(build_pyramid(img, 4, 10), InvalidInput);
  EXPECT_THROW(build_pyramid(PlanarImage(420, 300, 1, ColorSpace::GRAY01), 5, 1), InvalidInput);
}

TEST(PyramidCoords, ExactDivisionAndComposition) {
  EXPECT_EQ(pyramid_coords({8, 4}, 2), (Point2d{2, 1}));
  EXPECT_EQ(pyramid_coords({8, 4}, 0), (Point2d{8, 4}));
  EXPECT_EQ(pyramid_coords({5, 3}, 1), (Point2d{2.5, 1.5}));
  CounterRng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Point2d p{rng.uniform(0, 500), rng.uniform(0, 500)};
    const int a = static_cast<int>(rng.below(3)), b = static_cast<int>(rng.below(3));
    EXPECT_EQ(pyramid_coords(pyramid_coords(p, a), b), pyramid_coords(p, a + b));
  }
}

TEST(ResizeBilinear, ConstantAndCorners) {
  PlanarImage img(8, 6, 3, ColorSpace::RGB01, 0.25);
  auto r = resize_bilinear(img, 5, 11);
  EXPECT_EQ(r.width(), 5);
  EXPECT_EQ(r.height(), 11);
  for (double v : r.samples()) EXPECT_NEAR(v, 0.25, 1e-15);
  auto same = resize_bilinear(img, 8, 6);
  EXPECT_EQ(same.samples(), img.samples());
}

TEST(Pyramid, FeasibleLevel) {
  EXPECT_EQ(feasible_pyramid_level(420, 300, 4, 10), 4);
  EXPECT_EQ(feasible_pyramid_level(97, 97, 4, 10), 3);
  EXPECT_EQ(feasible_pyramid_level(16, 16, 4, 10), 0);
  EXPECT_EQ(feasible_pyramid_level(9, 16, 4, 10), -1);
  // Property: build_pyramid accepts the reported depth and rejects one more.
  for (int w = 10; w < 200; w += 7)
    for (int h = 10; h < 200; h += 11) {
      const int l = feasible_pyramid_level(w, h, 4, 10);
      PlanarImage img(w, h, 1, ColorSpace::GRAY01);
      EXPECT_NO_THROW(build_pyramid(img, l, 10));
      if (l < 4) EXPECT_THROW(build_pyramid(img, l + 1, 10), InvalidInput);
    }
}
