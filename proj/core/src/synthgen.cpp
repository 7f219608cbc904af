#include "dfetrack/synthgen.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dfetrack/error.hpp"
#include "dfetrack/image_io.hpp"
#include "dfetrack/parallel.hpp"
#include "dfetrack/rng.hpp"

namespace dfetrack::synth {
namespace {

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

// Zero-mean, unit-variance smoothed white noise.
std::vector<double> smooth_field(int w, int h, double sigma, std::uint64_t key) {
  PlanarImage noise(w, h, 1, ColorSpace::GRAY01);
  CounterRng rng(key);
  for (double& v : noise.plane(0)) v = rng.normal();
  const PlanarImage blurred = gaussian_blur(noise, sigma);
  std::vector<double> f(blurred.samples());
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double ss = 0.0;
  for (double v : f) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(f.size()));
  for (double& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return f;
}

double max_abs_displacement(const SynthSpec& spec) {
  double m = 0.0;
  for (int i = 0; i < spec.frames; ++i) {
    const Point2d d = spec.motion.at(i, spec.seed);
    m = std::max({m, std::abs(d.x), std::abs(d.y)});
  }
  return m;
}

const char* kind_name(MotionPath::Kind k) {
  switch (k) {
    case MotionPath::Kind::Static: return "static";
    case MotionPath::Kind::Jitter: return "jitter";
    case MotionPath::Kind::Sinusoid: return "sinusoid";
    case MotionPath::Kind::Explicit: return "explicit";
  }
  return "static";
}

MotionPath::Kind parse_kind(const std::string& s) {
  if (s == "static") return MotionPath::Kind::Static;
  if (s == "jitter") return MotionPath::Kind::Jitter;
  if (s == "sinusoid") return MotionPath::Kind::Sinusoid;
  if (s == "explicit") return MotionPath::Kind::Explicit;
  throw InvalidInput("unknown motion kind '" + s + "'");
}

double lerp_frame(double a, double b, int frame, int frames) {
  if (frames <= 1) return a;
  return a + (b - a) * static_cast<double>(frame) / static_cast<double>(frames - 1);
}

}  // namespace

Point2d MotionPath::at(int frame, std::uint64_t seed) const {
  switch (kind) {
    case Kind::Static: return {0.0, 0.0};
    case Kind::Jitter: {
      if (frame == 0) return {0.0, 0.0};
      CounterRng rng(hash_combine(seed, 0x6a69747465ULL), 2 * static_cast<std::uint64_t>(frame));
      const double dx = rng.uniform(-amplitude.x, amplitude.x);
      const double dy = rng.uniform(-amplitude.y, amplitude.y);
      return {dx, dy};
    }
    case Kind::Sinusoid: {
      const double t = 2.0 * std::numbers::pi * frame / period + phase;
      return {amplitude.x * (std::sin(t) - std::sin(phase)), amplitude.y * (std::sin(t) - std::sin(phase))};
    }
    case Kind::Explicit:
      if (frame < 0 || static_cast<std::size_t>(frame) >= points.size()) {
        throw InvalidInput(fmt::format("explicit motion path has no entry for frame {}", frame));
      }
      return points[static_cast<std::size_t>(frame)];
  }
  return {0.0, 0.0};
}

Point2d MotionPath::step_bound() const {
  switch (kind) {
    case Kind::Static: return {0.0, 0.0};
    case Kind::Jitter: return {2.0 * std::abs(amplitude.x), 2.0 * std::abs(amplitude.y)};
    case Kind::Sinusoid: {
      const double h = std::min(2.0, 2.0 * std::numbers::pi / period);
      return {std::abs(amplitude.x) * h, std::abs(amplitude.y) * h};
    }
    case Kind::Explicit: {
      Point2d b{0.0, 0.0};
      for (std::size_t i = 1; i < points.size(); ++i) {
        b.x = std::max(b.x, std::abs(points[i].x - points[i - 1].x));
        b.y = std::max(b.y, std::abs(points[i].y - points[i - 1].y));
      }
      return b;
    }
  }
  return {0.0, 0.0};
}

double IlluminationPath::gain(int frame, int frames) const { return lerp_frame(gain_start, gain_end, frame, frames); }

double IlluminationPath::offset(int frame, int frames) const {
  return lerp_frame(offset_start, offset_end, frame, frames);
}

SynthSpec SynthSpec::centered(int width, int height, int frames, std::uint64_t seed) {
  SynthSpec s;
  s.width = width;
  s.height = height;
  s.frames = frames;
  s.seed = seed;
  s.blob.center = {(width - 1) / 2.0, (height - 1) / 2.0};
  return s;
}

void SynthSpec::validate() const {
  if (width < 1 || height < 1 || frames < 1) throw InvalidInput("synth: width, height, and frames must be positive");
  if (window < 1 || window % 2 == 0) throw InvalidInput("synth: feature window must be odd and positive");
  if (noise_sigma < 0.0) throw InvalidInput("synth: noise sigma must be non-negative");
  if (supersample < 1 || supersample > 16) throw InvalidInput("synth: supersample must lie in [1, 16]");
  if (!(blob.sigma > 0.0)) throw InvalidInput("synth: blob sigma must be positive");
  if (motion.kind == MotionPath::Kind::Sinusoid && !(motion.period > 0.0)) {
    throw InvalidInput("synth: sinusoid period must be positive");
  }
  if (motion.kind == MotionPath::Kind::Explicit && motion.points.size() < static_cast<std::size_t>(frames)) {
    throw InvalidInput(fmt::format("synth: explicit path has {} points for {} frames", motion.points.size(), frames));
  }
  const double half = window / 2;
  for (int i = 0; i < frames; ++i) {
    if (!(illumination.gain(i, frames) > 0.0)) throw InvalidInput(fmt::format("synth: gain at frame {} is not positive", i));
    const Point2d c = blob.center + motion.at(i, seed);
    if (c.x - half < 0.0 || c.y - half < 0.0 || c.x + half > width - 1 || c.y + half > height - 1) {
      throw InvalidInput(fmt::format("synth: feature window at ({:.3f}, {:.3f}) leaves the {}x{} frame {}", c.x, c.y,
                                     width, height, i));
    }
  }
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json motion_j = {{"kind", kind_name(motion.kind)},
                             {"amplitude", {motion.amplitude.x, motion.amplitude.y}},
                             {"period", motion.period},
                             {"phase", motion.phase}};
  if (motion.kind == MotionPath::Kind::Explicit) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : motion.points) pts.push_back({p.x, p.y});
    motion_j["points"] = pts;
  }
  return {{"seed", seed},
          {"width", width},
          {"height", height},
          {"frames", frames},
          {"window", window},
          {"noise_sigma", noise_sigma},
          {"supersample", supersample},
          {"texture",
           {{"base_rgb", texture.base_rgb},
            {"fine_sigma", texture.fine_sigma},
            {"coarse_sigma", texture.coarse_sigma},
            {"fine_contrast", texture.fine_contrast},
            {"coarse_contrast", texture.coarse_contrast},
            {"chroma_contrast", texture.chroma_contrast}}},
          {"blob", {{"x", blob.center.x}, {"y", blob.center.y}, {"sigma", blob.sigma}, {"depth", blob.depth}}},
          {"motion", motion_j},
          {"illumination",
           {{"gain", {illumination.gain_start, illumination.gain_end}},
            {"offset", {illumination.offset_start, illumination.offset_end}}}}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.frames = j.value("frames", s.frames);
    s.window = j.value("window", s.window);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.supersample = j.value("supersample", s.supersample);
    s.blob.center = {(s.width - 1) / 2.0, (s.height - 1) / 2.0};
    if (j.contains("texture")) {
      const auto& t = j.at("texture");
      s.texture.base_rgb = t.value("base_rgb", s.texture.base_rgb);
      s.texture.fine_sigma = t.value("fine_sigma", s.texture.fine_sigma);
      s.texture.coarse_sigma = t.value("coarse_sigma", s.texture.coarse_sigma);
      s.texture.fine_contrast = t.value("fine_contrast", s.texture.fine_contrast);
      s.texture.coarse_contrast = t.value("coarse_contrast", s.texture.coarse_contrast);
      s.texture.chroma_contrast = t.value("chroma_contrast", s.texture.chroma_contrast);
    }
    if (j.contains("blob")) {
      const auto& b = j.at("blob");
      s.blob.center = {b.value("x", s.blob.center.x), b.value("y", s.blob.center.y)};
      s.blob.sigma = b.value("sigma", s.blob.sigma);
      s.blob.depth = b.value("depth", s.blob.depth);
    }
    if (j.contains("motion")) {
      const auto& m = j.at("motion");
      s.motion.kind = parse_kind(m.value("kind", std::string("static")));
      if (m.contains("amplitude")) {
        const auto a = m.at("amplitude").get<std::array<double, 2>>();
        s.motion.amplitude = {a[0], a[1]};
      }
      s.motion.period = m.value("period", s.motion.period);
      s.motion.phase = m.value("phase", s.motion.phase);
      if (m.contains("points")) {
        for (const auto& p : m.at("points")) {
          const auto a = p.get<std::array<double, 2>>();
          s.motion.points.push_back({a[0], a[1]});
        }
      }
    }
    if (j.contains("illumination")) {
      const auto& il = j.at("illumination");
      if (il.contains("gain")) {
        const auto g = il.at("gain").get<std::array<double, 2>>();
        s.illumination.gain_start = g[0];
        s.illumination.gain_end = g[1];
      }
      if (il.contains("offset")) {
        const auto o = il.at("offset").get<std::array<double, 2>>();
        s.illumination.offset_start = o[0];
        s.illumination.offset_end = o[1];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

PlanarImage gaussian_blur(const PlanarImage& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int w = img.width();
  const int h = img.height();
  PlanarImage out(w, h, img.channels(), img.space());
  // One padded line buffer per pass; columns are gathered into it so both
  // passes run over contiguous memory.
  auto blur_line = [&](std::vector<double>& line, int n, std::vector<double>& padded) {
    padded.resize(static_cast<std::size_t>(n + 2 * r));
    for (int i = -r; i < n + r; ++i) padded[static_cast<std::size_t>(i + r)] = line[static_cast<std::size_t>(mirror(i, n))];
    for (int x = 0; x < n; ++x) {
      const double* src = padded.data() + x;
      double acc = 0.0;
      for (std::size_t t = 0; t < k.size(); ++t) acc += k[t] * src[t];
      line[static_cast<std::size_t>(x)] = acc;
    }
  };
  for (int c = 0; c < img.channels(); ++c) {
    const auto src = img.plane(c);
    auto dst = out.plane(c);
    std::vector<double> line, padded;
    for (int y = 0; y < h; ++y) {
      line.assign(src.begin() + static_cast<std::ptrdiff_t>(y) * w, src.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
      blur_line(line, w, padded);
      std::copy(line.begin(), line.end(), dst.begin() + static_cast<std::ptrdiff_t>(y) * w);
    }
    line.resize(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) line[static_cast<std::size_t>(y)] = dst[static_cast<std::size_t>(y) * w + x];
      blur_line(line, h, padded);
      for (int y = 0; y < h; ++y) dst[static_cast<std::size_t>(y) * w + x] = line[static_cast<std::size_t>(y)];
    }
  }
  return out;
}

PlanarImage base_texture(const SynthSpec& spec, int margin) {
  const int s = spec.supersample;
  const int w = (spec.width + 2 * margin - 1) * s + 1;
  const int h = (spec.height + 2 * margin - 1) * s + 1;
  const auto& t = spec.texture;
  const auto fine = smooth_field(w, h, t.fine_sigma * s, hash_combine(spec.seed, 1));
  const auto coarse = smooth_field(w, h, t.coarse_sigma * s, hash_combine(spec.seed, 2));
  std::array<std::vector<double>, 3> chroma;
  for (int c = 0; c < 3; ++c) {
    chroma[static_cast<std::size_t>(c)] = smooth_field(w, h, t.coarse_sigma * s, hash_combine(spec.seed, 3 + c));
  }
  const Point2d bc = static_cast<double>(s) * (spec.blob.center + Point2d{static_cast<double>(margin), static_cast<double>(margin)});
  const double blob_sigma = spec.blob.sigma * s;
  PlanarImage img(w, h, 3, ColorSpace::RGB01);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double lum = t.fine_contrast * fine[i] + t.coarse_contrast * coarse[i];
      const double r2 = (x - bc.x) * (x - bc.x) + (y - bc.y) * (y - bc.y);
      const double shade = 1.0 - spec.blob.depth * std::exp(-0.5 * r2 / (blob_sigma * blob_sigma));
      for (int c = 0; c < 3; ++c) {
        const double v = t.base_rgb[static_cast<std::size_t>(c)] * (1.0 + lum) +
                         t.chroma_contrast * chroma[static_cast<std::size_t>(c)][i];
        img.at(x, y, c) = std::clamp(v * shade, 0.0, 1.0);
      }
    }
  }
  return img;
}

Sequence generate(const SynthSpec& spec) {
  spec.validate();
  const int margin = static_cast<int>(std::ceil(max_abs_displacement(spec))) + 2;
  const PlanarImage base = base_texture(spec, margin);
  const double s = spec.supersample;
  Sequence seq;
  seq.frames.resize(static_cast<std::size_t>(spec.frames));
  seq.truth.resize(static_cast<std::size_t>(spec.frames));
  parallel_for(static_cast<std::size_t>(spec.frames), [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    const Point2d d = spec.motion.at(f, spec.seed);
    const double gain = spec.illumination.gain(f, spec.frames);
    const double offset = spec.illumination.offset(f, spec.frames);
    CounterRng noise(hash_combine(spec.seed, 0x6e6f697365ULL + fi));
    PlanarImage frame(spec.width, spec.height, 3, ColorSpace::RGB01);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          const double v = sample_bilinear(base, s * (x + margin - d.x), s * (y + margin - d.y), c);
          double out = std::clamp(gain * v + offset, 0.0, 1.0);
          if (spec.noise_sigma > 0.0) out = std::clamp(out + spec.noise_sigma * noise.normal(), 0.0, 1.0);
          frame.at(x, y, c) = out;
        }
      }
    }
    seq.frames[fi] = std::move(frame);
    seq.truth[fi] = spec.blob.center + d;
  });
  return seq;
}

void write_sequence(const Sequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    write_image(dir / fmt::format("frame_{:04d}.png", i), seq.frames[i]);
  }
  std::ofstream f(dir / "labels.csv");
  if (!f) throw IoError("cannot write " + (dir / "labels.csv").string());
  f << "frame,x,y\n";
  for (std::size_t i = 0; i < seq.truth.size(); ++i) {
    f << fmt::format("{},{:.17g},{:.17g}\n", i, seq.truth[i].x, seq.truth[i].y);
  }
  if (!f) throw IoError("failed writing labels.csv");
}

}  // namespace dfetrack::synth
