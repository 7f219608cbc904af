#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dfetrack/raster.hpp"
#include "dfetrack/rng.hpp"
#include "dfetrack/synthgen.hpp"

namespace testsupport {

// Smooth gray texture: white noise blurred with a Gaussian of `sigma`,
// stretched to roughly [0.1, 0.9].
inline dfetrack::PlanarImage smooth_texture(int w, int h, std::uint64_t seed, double sigma = 2.0) {
  dfetrack::PlanarImage noise(w, h, 1, dfetrack::ColorSpace::GRAY01);
  dfetrack::CounterRng rng(seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) noise.at(x, y) = rng.uniform();
  auto img = dfetrack::synth::gaussian_blur(noise, sigma);
  double lo = 1e9, hi = -1e9;
  for (double v : img.samples()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  dfetrack::PlanarImage out(w, h, 1, dfetrack::ColorSpace::GRAY01);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = 0.1 + 0.8 * (img.at(x, y) - lo) / (hi - lo);
  return out;
}

// Samples `src` at (x - tx, y - ty), so content moves by +t.
inline dfetrack::PlanarImage translate(const dfetrack::PlanarImage& src, double tx, double ty) {
  dfetrack::PlanarImage out(src.width(), src.height(), src.channels(), src.space());
  for (int c = 0; c < src.channels(); ++c)
    for (int y = 0; y < src.height(); ++y)
      for (int x = 0; x < src.width(); ++x) {
        const double sx = std::clamp(x - tx, 0.0, src.width() - 1.0);
        const double sy = std::clamp(y - ty, 0.0, src.height() - 1.0);
        out.at(x, y, c) = dfetrack::sample_bilinear(src, sx, sy, c);
      }
  return out;
}

inline dfetrack::PlanarImage gray_to_rgb(const dfetrack::PlanarImage& g) {
  dfetrack::PlanarImage out(g.width(), g.height(), 3, dfetrack::ColorSpace::RGB01);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x) out.at(x, y, c) = g.at(x, y);
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dfetrack_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
