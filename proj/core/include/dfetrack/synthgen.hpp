#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "dfetrack/geometry.hpp"
#include "dfetrack/raster.hpp"

namespace dfetrack::synth {

// Skin-like band-limited texture: a fine and a coarse smoothed noise field
// modulating a base colour.
struct TextureParams {
  std::array<double, 3> base_rgb{0.82, 0.60, 0.50};
  double fine_sigma = 1.5;     // smoothing of the fine field, pixels
  double coarse_sigma = 6.0;   // smoothing of the coarse field, pixels
  double fine_contrast = 0.10;
  double coarse_contrast = 0.12;
  double chroma_contrast = 0.03;
};

// Dark Gaussian blob planted at `center` (frame-0 coordinates).
struct Blob {
  Point2d center{0.0, 0.0};
  double sigma = 2.5;
  double depth = 0.5;  // fractional darkening at the blob centre
};

// Displacement of the scene relative to frame 0, d(0) = 0 for every kind
// except Explicit.
struct MotionPath {
  enum class Kind { Static, Jitter, Sinusoid, Explicit };
  Kind kind = Kind::Static;
  Point2d amplitude{0.0, 0.0};  // jitter bound or sinusoid amplitude per axis
  double period = 20.0;         // sinusoid period in frames
  double phase = 0.0;           // radians, added to both axes
  std::vector<Point2d> points;  // Explicit: one displacement per frame

  // Jitter draws depend on `seed`.
  Point2d at(int frame, std::uint64_t seed) const;
  // Largest per-axis frame-to-frame displacement the path can produce.
  Point2d step_bound() const;
};

// Gain and offset interpolated linearly from the first to the last frame.
struct IlluminationPath {
  double gain_start = 1.0;
  double gain_end = 1.0;
  double offset_start = 0.0;
  double offset_end = 0.0;

  double gain(int frame, int frames) const;
  double offset(int frame, int frames) const;
};

struct SynthSpec {
  std::uint64_t seed = 1;
  int width = 96;
  int height = 96;
  int frames = 40;
  int window = 31;  // the feature window that must stay inside every frame
  double noise_sigma = 0.0;
  // The base texture is rendered on a grid `supersample` times finer than
  // the frames, which keeps the interpolation error of the warp small.
  int supersample = 2;
  TextureParams texture;
  Blob blob;
  MotionPath motion;
  IlluminationPath illumination;

  // A spec with the blob at the frame centre and no motion.
  static SynthSpec centered(int width, int height, int frames, std::uint64_t seed);

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct Sequence {
  std::vector<PlanarImage> frames;  // RGB01
  std::vector<Point2d> truth;       // planted feature centre per frame
};

// Texture at frame-0 geometry extended by `margin` pixels on every side,
// sampled spec.supersample times per frame pixel along each axis.
PlanarImage base_texture(const SynthSpec& spec, int margin);

Sequence generate(const SynthSpec& spec);

// Separable Gaussian blur with mirrored borders.
PlanarImage gaussian_blur(const PlanarImage& img, double sigma);

// frame_0000.png ... plus labels.csv (frame,x,y).
void write_sequence(const Sequence& seq, const std::filesystem::path& dir);

}  // namespace dfetrack::synth
