#include "dfetrack/raster.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "dfetrack/error.hpp"

namespace dfetrack {
namespace {

constexpr double kXn = 0.950456;
constexpr double kZn = 1.088754;
constexpr double kLabEpsilon = 0.008856;

constexpr double kLabMin[3] = {0.0, -127.0, -127.0};
constexpr double kLabMax[3] = {100.0, 127.0, 127.0};

double lab_f(double t) {
  return t > kLabEpsilon ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0;
}

void require_three_channels(const PlanarImage& img, const char* op) {
  if (img.channels() != 3) {
    std::ostringstream msg;
    msg << op << ": expected a 3-channel image, got " << img.channels() << " channel(s)";
    throw InvalidInput(msg.str());
  }
}

// Reflect-101 border handling (…2 1 | 0 1 2 … n-1 | n-2 …).
int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    i = i < 0 ? -i : 2 * (n - 1) - i;
  }
  return i;
}

// Taps are applied to differences from the centre sample, so constant
// regions pass through bit-exactly.
std::vector<double> binomial_blur(std::span<const double> plane, int w, int h) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 0.0, 4.0 / 16, 1.0 / 16};
  std::vector<double> tmp(plane.size());
  std::vector<double> out(plane.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double mid = plane[y * w + x];
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) acc += k[t + 2] * (plane[y * w + reflect101(x + t, w)] - mid);
      tmp[y * w + x] = mid + acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double mid = tmp[y * w + x];
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) acc += k[t + 2] * (tmp[reflect101(y + t, h) * w + x] - mid);
      out[y * w + x] = mid + acc;
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(ColorSpace space) {
  switch (space) {
    case ColorSpace::RGB01: return "RGB01";
    case ColorSpace::CIELAB: return "CIELAB";
    case ColorSpace::LAB01: return "LAB01";
    case ColorSpace::GRAY01: return "GRAY01";
  }
  return "unknown";
}

PlanarImage::PlanarImage(int width, int height, int channels, ColorSpace space, double fill)
    : PlanarImage(width, height, channels, space,
                  std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) *
                                          std::max(height, 0) * std::max(channels, 0),
                                      fill)) {}

PlanarImage::PlanarImage(int width, int height, int channels, ColorSpace space,
                         std::vector<double> samples)
    : width_(width), height_(height), channels_(channels), space_(space),
      samples_(std::move(samples)) {
  if (width < 1 || height < 1) throw InvalidInput("image dimensions must be at least 1x1");
  if (channels != 1 && channels != 3) throw InvalidInput("images have 1 or 3 channels");
  if ((space == ColorSpace::GRAY01) != (channels == 1)) {
    throw InvalidInput(std::string("colour space ") + std::string(to_string(space)) +
                       " does not match channel count " + std::to_string(channels));
  }
  if (samples_.size() != static_cast<std::size_t>(width) * height * channels) {
    throw InvalidInput("sample count does not equal width*height*channels");
  }
}

std::array<double, 3> rgb_to_cielab(double r, double g, double b) {
  double x = 0.412453 * r + 0.357580 * g + 0.180423 * b;
  const double y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
  double z = 0.019334 * r + 0.119193 * g + 0.950227 * b;
  x /= kXn;
  z /= kZn;
  const double l = y > kLabEpsilon ? 116.0 * std::cbrt(y) - 16.0 : 903.3 * y;
  const double fy = lab_f(y);
  return {l, 500.0 * (lab_f(x) - fy), 200.0 * (fy - lab_f(z))};
}

PlanarImage rgb_to_cielab(const PlanarImage& img) {
  require_three_channels(img, "rgb_to_cielab");
  if (img.space() != ColorSpace::RGB01) {
    throw InvalidInput("rgb_to_cielab: input must be RGB01, got " +
                       std::string(to_string(img.space())));
  }
  PlanarImage out(img.width(), img.height(), 3, ColorSpace::CIELAB);
  const auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto l = out.plane(0), a = out.plane(1), bb = out.plane(2);
  for (std::size_t i = 0; i < img.plane_size(); ++i) {
    const auto lab = rgb_to_cielab(r[i], g[i], b[i]);
    l[i] = lab[0];
    a[i] = lab[1];
    bb[i] = lab[2];
  }
  return out;
}

PlanarImage normalize_lab(const PlanarImage& img) {
  if (img.space() != ColorSpace::CIELAB) {
    throw InvalidInput("normalize_lab: input must be CIELAB, got " +
                       std::string(to_string(img.space())));
  }
  PlanarImage out(img.width(), img.height(), 3, ColorSpace::LAB01);
  for (int c = 0; c < 3; ++c) {
    const double lo = kLabMin[c];
    const double span = kLabMax[c] - kLabMin[c];
    const auto src = img.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - lo) / span;
  }
  return out;
}

PlanarImage to_lab01(const PlanarImage& img) {
  switch (img.space()) {
    case ColorSpace::LAB01: return img;
    case ColorSpace::CIELAB: return normalize_lab(img);
    case ColorSpace::RGB01: return normalize_lab(rgb_to_cielab(img));
    case ColorSpace::GRAY01: break;
  }
  throw InvalidInput("to_lab01: grayscale images carry no colour information");
}

PlanarImage to_grayscale(const PlanarImage& img) {
  require_three_channels(img, "to_grayscale");
  const PlanarImage lab = [&] {
    switch (img.space()) {
      case ColorSpace::RGB01: return rgb_to_cielab(img);
      case ColorSpace::CIELAB: return img;
      default: break;
    }
    throw InvalidInput("to_grayscale: expected RGB01 or CIELAB input");
  }();
  PlanarImage out(img.width(), img.height(), 1, ColorSpace::GRAY01);
  const auto l = lab.plane(0);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < l.size(); ++i) dst[i] = l[i] / 100.0;
  return out;
}

Crop extract_crop(const PlanarImage& img, Pixel center, int size) {
  if (size < 1 || size % 2 == 0) {
    throw InvalidInput("extract_crop: crop size must be odd, got " + std::to_string(size));
  }
  const int half = size / 2;
  if (center.x - half < 0 || center.y - half < 0 || center.x + half > img.width() - 1 ||
      center.y + half > img.height() - 1) {
    std::ostringstream msg;
    msg << "extract_crop: centre " << center << " is closer than " << half
        << " px to the border of a " << img.width() << "x" << img.height() << " image";
    throw BorderError(msg.str());
  }
  PlanarImage out(size, size, img.channels(), img.space());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        out.at(x, y, c) = img.at(center.x - half + x, center.y - half + y, c);
      }
    }
  }
  return {center, size, std::move(out)};
}

PlanarImage downsample_half(const PlanarImage& img) {
  if (img.width() < 2 || img.height() < 2) {
    throw InvalidInput("downsample_half: image must be at least 2x2, got " +
                       std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  const int w = img.width(), h = img.height();
  const int ow = w / 2, oh = h / 2;
  PlanarImage out(ow, oh, img.channels(), img.space());
  for (int c = 0; c < img.channels(); ++c) {
    const auto blurred = binomial_blur(img.plane(c), w, h);
    auto dst = out.plane(c);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const int sx = 2 * x, sy = 2 * y;
        const double a = blurred[sy * w + sx];
        dst[y * ow + x] = a + 0.25 * ((blurred[sy * w + sx + 1] - a) + (blurred[(sy + 1) * w + sx] - a) +
                                      (blurred[(sy + 1) * w + sx + 1] - a));
      }
    }
  }
  return out;
}

ImagePyramid build_pyramid(const PlanarImage& img, int max_level, int min_extent) {
  if (max_level < 0 || max_level > kMaxPyramidLevel) {
    throw InvalidInput("build_pyramid: max level must lie in [0, 4], got " +
                       std::to_string(max_level));
  }
  if (img.width() < min_extent || img.height() < min_extent) {
    throw InvalidInput("build_pyramid: input smaller than the required extent");
  }
  ImagePyramid pyr;
  pyr.levels.reserve(max_level + 1);
  pyr.levels.push_back(img);
  for (int level = 1; level <= max_level; ++level) {
    const PlanarImage& prev = pyr.levels.back();
    const int w = prev.width() / 2, h = prev.height() / 2;
    if (prev.width() < 2 || prev.height() < 2 || w < min_extent || h < min_extent) {
      std::ostringstream msg;
      msg << "build_pyramid: level " << level << " would be " << w << "x" << h
          << ", smaller than the required " << min_extent << " px";
      throw InvalidInput(msg.str());
    }
    pyr.levels.push_back(downsample_half(prev));
  }
  return pyr;
}

int feasible_pyramid_level(int width, int height, int max_level, int min_extent) {
  if (width < min_extent || height < min_extent) return -1;
  int level = 0;
  while (level < max_level && width / 2 >= min_extent && height / 2 >= min_extent && width >= 2 && height >= 2) {
    width /= 2;
    height /= 2;
    ++level;
  }
  return level;
}

double sample_bilinear(const PlanarImage& img, double x, double y, int c) {
  const int w = img.width(), h = img.height();
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, std::max(w - 2, 0));
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  const auto p = img.plane(c);
  const double top = (1.0 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1];
  const double bottom = (1.0 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1];
  return (1.0 - fy) * top + fy * bottom;
}

PlanarImage resize_bilinear(const PlanarImage& img, int width, int height) {
  PlanarImage out(width, height, img.channels(), img.space());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
      for (int x = 0; x < width; ++x) {
        const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
        out.at(x, y, c) = sample_bilinear(img, src_x, src_y, c);
      }
    }
  }
  return out;
}

}  // namespace dfetrack
