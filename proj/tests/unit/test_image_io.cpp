#include <gtest/gtest.h>

#include <fstream>

#include "dfetrack/error.hpp"
#include "dfetrack/image_io.hpp"
#include "dfetrack/rng.hpp"
#include "support.hpp"

using namespace dfetrack;

namespace {

PlanarImage quantized_rgb(int w, int h, std::uint64_t seed) {
  PlanarImage img(w, h, 3, ColorSpace::RGB01);
  CounterRng rng(seed);
  for (int c = 0; c < 3; ++c) for (auto& v : img.plane(c)) v = static_cast<double>(rng.below(256)) / 255.0;
  return img;
}

}  // namespace

TEST(ImageIo, PngRoundTripIsLossless) {
  testsupport::TempDir dir("io");
  const auto img = quantized_rgb(23, 17, 3);
  write_image(dir / "a.png", img);
  const auto back = read_image(dir / "a.png");
  EXPECT_EQ(back.space(), ColorSpace::RGB01);
  EXPECT_EQ(back.width(), 23);
  EXPECT_EQ(back.height(), 17);
  EXPECT_EQ(back.samples(), img.samples());
}

TEST(ImageIo, PnmRoundTrip) {
  testsupport::TempDir dir("io");
  const auto img = quantized_rgb(9, 5, 4);
  write_image(dir / "a.ppm", img);
  EXPECT_EQ(read_image(dir / "a.ppm").samples(), img.samples());

  PlanarImage gray(6, 4, 1, ColorSpace::GRAY01);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) gray.at(x, y) = (x * 4 + y) / 255.0;
  write_image(dir / "g.pgm", gray);
  const auto g = read_image(dir / "g.pgm");
  EXPECT_EQ(g.space(), ColorSpace::GRAY01);
  EXPECT_EQ(g.samples(), gray.samples());
  write_image(dir / "g.png", gray);
  EXPECT_EQ(read_image(dir / "g.png").channels(), 1);
}

TEST(ImageIo, EightBitScaling) {
  testsupport::TempDir dir("io");
  std::ofstream(dir / "p.ppm", std::ios::binary) << "P6\n# comment\n1 1\n255\n" << '\xff' << '\x00' << '\x80';
  const auto img = read_image(dir / "p.ppm");
  EXPECT_DOUBLE_EQ(img.at(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0, 2), 128.0 / 255.0);
}

TEST(ImageIo, Errors) {
  testsupport::TempDir dir("io");
  EXPECT_THROW(read_image(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_image(dir / "junk.png"), IoError);
  std::ofstream(dir / "short.ppm", std::ios::binary) << "P6\n4 4\n255\nabc";
  EXPECT_THROW(read_image(dir / "short.ppm"), FormatError);
  EXPECT_THROW(write_image(dir / "x.bmp", quantized_rgb(2, 2, 1)), IoError);
  EXPECT_THROW(write_image(dir / "x.pgm", quantized_rgb(2, 2, 1)), InvalidInput);
}

TEST(ImageIo, ListImagesSortedAndRecursive) {
  testsupport::TempDir dir("io");
  const auto img = quantized_rgb(2, 2, 1);
  std::filesystem::create_directories(dir / "sub");
  write_image(dir / "b.png", img);
  write_image(dir / "a.ppm", img);
  write_image(dir.path() / "sub" / "c.png", img);
  std::ofstream(dir / "notes.txt") << "x";
  auto flat = list_images(dir.path());
  ASSERT_EQ(flat.size(), 2u);
  EXPECT_EQ(flat[0].filename(), "a.ppm");
  EXPECT_EQ(flat[1].filename(), "b.png");
  EXPECT_EQ(list_images(dir.path(), true).size(), 3u);
}
