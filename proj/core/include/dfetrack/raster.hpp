#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "dfetrack/geometry.hpp"

namespace dfetrack {

// Channel semantics of a PlanarImage.
//   RGB01   three channels, samples in [0, 1]
//   CIELAB  L in [0, 100], a and b in [-127, 127]
//   LAB01   CIELAB min-max normalised to [0, 1] per channel
//   GRAY01  single channel in [0, 1]
enum class ColorSpace { RGB01, CIELAB, LAB01, GRAY01 };

std::string_view to_string(ColorSpace space);

// Multi-channel raster with one contiguous plane per channel. Images are
// values; operations return new images and never mutate their inputs.
class PlanarImage {
 public:
  PlanarImage() = default;
  PlanarImage(int width, int height, int channels, ColorSpace space, double fill = 0.0);
  PlanarImage(int width, int height, int channels, ColorSpace space, std::vector<double> samples);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  ColorSpace space() const { return space_; }
  bool empty() const { return samples_.empty(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

  double at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }
  double& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }

  std::span<const double> plane(int c) const {
    return {samples_.data() + c * plane_size(), plane_size()};
  }
  std::span<double> plane(int c) { return {samples_.data() + c * plane_size(), plane_size()}; }

  const std::vector<double>& samples() const { return samples_; }

  // True when (x, y) is at least `margin` pixels from every border.
  bool contains(Point2d p, double margin = 0.0) const {
    return p.x >= margin && p.y >= margin && p.x <= width_ - 1 - margin &&
           p.y <= height_ - 1 - margin;
  }

 private:
  std::size_t index(int x, int y, int c) const {
    return c * plane_size() + static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  ColorSpace space_ = ColorSpace::GRAY01;
  std::vector<double> samples_;
};

// Square, odd-sized window cut from a source image.
struct Crop {
  Pixel center;
  int size = 0;
  PlanarImage image;
};

struct ImagePyramid {
  std::vector<PlanarImage> levels;  // levels[0] is the full-resolution input
  int max_level() const { return static_cast<int>(levels.size()) - 1; }
};

inline constexpr int kMaxPyramidLevel = 4;

// Scalar form of the RGB -> CIELAB conversion (D65 white, no gamma step).
std::array<double, 3> rgb_to_cielab(double r, double g, double b);

PlanarImage rgb_to_cielab(const PlanarImage& img);

// Min-max normalisation against the fixed CIELAB channel bounds.
PlanarImage normalize_lab(const PlanarImage& img);

// Convenience: RGB01 or CIELAB -> LAB01. LAB01 input is returned unchanged.
PlanarImage to_lab01(const PlanarImage& img);

// Lightness channel scaled to [0, 1].
PlanarImage to_grayscale(const PlanarImage& img);

Crop extract_crop(const PlanarImage& img, Pixel center, int size);

// Binomial [1 4 6 4 1]/16 prefilter, then 2x2 block averaging.
PlanarImage downsample_half(const PlanarImage& img);

// Builds I^0..I^max_level. Every level must be at least `min_extent`
// pixels wide and tall.
ImagePyramid build_pyramid(const PlanarImage& img, int max_level, int min_extent = 1);

// Deepest level <= max_level that build_pyramid accepts for a w x h image;
// -1 when even the input is too small.
int feasible_pyramid_level(int width, int height, int max_level, int min_extent = 1);

inline Point2d pyramid_coords(Point2d p, int level) {
  const double scale = static_cast<double>(1 << level);
  return {p.x / scale, p.y / scale};
}

// Bilinear sample; (x, y) must lie in [0, w-1] x [0, h-1].
double sample_bilinear(const PlanarImage& img, double x, double y, int c = 0);

// Bilinear resampling to an explicit size (pixel-centre aligned).
PlanarImage resize_bilinear(const PlanarImage& img, int width, int height);

}  // namespace dfetrack
