#include "dfetrack/tracker.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dfetrack/error.hpp"
#include "dfetrack/image_io.hpp"
#include "dfetrack/parallel.hpp"
#include "dfetrack/svg.hpp"

namespace dfetrack::tracking {
namespace {

bool window_fits(Point2d p, int window, int width, int height) {
  const Pixel c = round_to_pixel(p);
  const int half = window / 2;
  return c.x - half >= 0 && c.y - half >= 0 && c.x + half < width && c.y + half < height;
}

std::string number_or_string(double v) {
  if (std::isfinite(v)) return fmt::format("{:.10g}", v);
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return number_or_string(v);
}

}  // namespace

void TrackScheme::validate() const {
  if (ratio_threshold && !(*ratio_threshold > 0.0 && *ratio_threshold <= 1.0)) {
    throw InvalidInput(fmt::format("ratio threshold {} outside (0, 1]", *ratio_threshold));
  }
}

const char* to_string(ReferenceMode m) { return m == ReferenceMode::Fixed ? "fixed" : "previous"; }

const char* to_string(UnmatchedPolicy p) {
  return p == UnmatchedPolicy::AssignDiagonal ? "assign-diagonal" : "hold-last";
}

match::SsrLandscape DescriptorExtractor::landscape(const PlanarImage& frame, const match::Descriptor& ref) const {
  const auto grid = match::position_grid(frame.width(), frame.height(), window(), 1);
  match::SsrLandscape land{grid, std::vector<double>(grid.size())};
  parallel_for(grid.size(), [&](std::size_t k) { land.ssr[k] = match::ssr(ref, describe(frame, grid.center(k))); });
  return land;
}

DfeExtractor::DfeExtractor(std::shared_ptr<const cae::CaeModel> model) : model_(std::move(model)) {
  if (!model_) throw InvalidInput("DFE extractor needs a model");
  if (model_->config().latent_extent() != 1) {
    throw PreconditionError("DFE extractor needs an encoder that reduces a crop to 1x1");
  }
}

int DfeExtractor::window() const { return model_->config().input_size; }

match::Descriptor DfeExtractor::describe(const PlanarImage& frame, Pixel center) const {
  return cae::encode(*model_, to_lab01(extract_crop(frame, center, window()).image));
}

match::SsrLandscape DfeExtractor::landscape(const PlanarImage& frame, const match::Descriptor& ref) const {
  return cae::dense_landscape(cae::encode_dense(*model_, to_lab01(frame)), ref);
}

RawPatchExtractor::RawPatchExtractor(int window) : window_(window) {
  if (window < 1 || window % 2 == 0) throw InvalidInput("raw patch window must be odd and positive");
}

match::Descriptor RawPatchExtractor::describe(const PlanarImage& frame, Pixel center) const {
  const PlanarImage crop = to_lab01(extract_crop(frame, center, window_).image);
  return {crop.samples()};
}

match::SsrLandscape RawPatchExtractor::landscape(const PlanarImage& frame, const match::Descriptor& ref) const {
  const PlanarImage lab = to_lab01(frame);
  const auto grid = match::position_grid(lab.width(), lab.height(), window_, 1);
  const std::size_t plane = static_cast<std::size_t>(window_) * window_;
  if (ref.size() != plane * static_cast<std::size_t>(lab.channels())) {
    throw InvalidInput("raw patch reference does not match the window");
  }
  match::SsrLandscape land{grid, std::vector<double>(grid.size())};
  // Same summation order as match::ssr over describe(): channel, row, column.
  parallel_for(grid.size(), [&](std::size_t k) {
    const Pixel c = grid.center(k);
    const int x0 = c.x - window_ / 2;
    const int y0 = c.y - window_ / 2;
    double acc = 0.0;
    std::size_t r = 0;
    for (int ch = 0; ch < lab.channels(); ++ch) {
      for (int y = 0; y < window_; ++y) {
        for (int x = 0; x < window_; ++x) {
          const double d = ref.values[r++] - lab.at(x0 + x, y0 + y, ch);
          acc += d * d;
        }
      }
    }
    land.ssr[k] = acc;
  });
  return land;
}

DescriptorMatcher::DescriptorMatcher(std::shared_ptr<const DescriptorExtractor> extractor, bool keep_landscapes)
    : extractor_(std::move(extractor)), keep_landscapes_(keep_landscapes) {
  if (!extractor_) throw InvalidInput("descriptor matcher needs an extractor");
}

void DescriptorMatcher::set_reference(const PlanarImage& frame, Point2d at) {
  const Pixel anchor = round_to_pixel(at);
  reference_ = extractor_->describe(frame, anchor);
  offset_ = at - anchor.to_point();
}

FrameMatch DescriptorMatcher::locate(const PlanarImage& frame, Point2d) const {
  if (reference_.values.empty()) throw PreconditionError("descriptor matcher has no reference");
  auto land = std::make_shared<match::SsrLandscape>(extractor_->landscape(frame, reference_));
  const match::MatchResult r = match::match_feature(*land);
  FrameMatch m;
  // The descriptor sits on the pixel grid; carry the sub-pixel remainder.
  m.position = r.subpixel_pos + offset_;
  m.nn_ratio = r.nn_ratio;
  m.ssr_min = r.ssr_min;
  m.curvature = r.curvature;
  m.status = std::string(match::to_string(r.status));
  if (keep_landscapes_) m.landscape = std::move(land);
  return m;
}

LkMatcher::LkMatcher(lk::FlowWindow win, bool guess_from_hint) : win_(win), guess_from_hint_(guess_from_hint) {
  win_.validate();
}

void LkMatcher::set_reference(const PlanarImage& frame, Point2d at) {
  const PlanarImage gray = frame.channels() == 1 ? frame : to_grayscale(frame);
  // Small frames get a shallower pyramid rather than an error.
  active_ = win_;
  active_.max_level = feasible_pyramid_level(gray.width(), gray.height(), win_.max_level, win_.size);
  if (active_.max_level < 0) throw InvalidInput("LK matcher: frame smaller than the flow window");
  reference_ = build_pyramid(gray, active_.max_level, win_.size);
  point_ = at;
}

FrameMatch LkMatcher::locate(const PlanarImage& frame, Point2d hint) const {
  if (reference_.levels.empty()) throw PreconditionError("LK matcher has no reference");
  const PlanarImage gray = frame.channels() == 1 ? frame : to_grayscale(frame);
  if (gray.width() != reference_.levels[0].width() || gray.height() != reference_.levels[0].height()) {
    throw InvalidInput("LK matcher: frame size differs from the reference frame");
  }
  const ImagePyramid cur = build_pyramid(gray, active_.max_level, win_.size);
  const lk::FlowResult r = lk::lk_pyramidal(reference_, cur, point_, active_, guess_from_hint_ ? hint : point_);
  FrameMatch m;
  m.position = r.position;
  m.out_of_bounds = r.status == lk::FlowStatus::OutOfBounds;
  m.status = std::string(lk::to_string(r.status));
  return m;
}

TrackResult track(std::span<const PlanarImage> frames, Point2d start, FeatureMatcher& matcher,
                  const TrackScheme& scheme) {
  scheme.validate();
  if (frames.empty()) throw InvalidInput("track: no frames");
  const int w = frames[0].width();
  const int h = frames[0].height();
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].width() != w || frames[i].height() != h) {
      throw InvalidInput(fmt::format("track: frame {} is {}x{}, frame 0 is {}x{}", i, frames[i].width(),
                                     frames[i].height(), w, h));
    }
  }
  const int win = matcher.window();
  if (!window_fits(start, win, w, h)) {
    throw BorderError(fmt::format("track: a {0}x{0} window at ({1}, {2}) does not fit frame 0", win, start.x, start.y));
  }

  TrackResult result;
  result.start = start;
  result.width = w;
  result.height = h;
  result.matcher = matcher.name();
  result.scheme = scheme;
  result.frames.resize(frames.size());
  result.frames[0] = {0, start, true, false, 0.0, "reference", nullptr};
  matcher.set_reference(frames[0], start);

  const std::size_t n = frames.size();
  std::vector<FrameMatch> precomputed;
  const bool parallel = scheme.mode == ReferenceMode::Fixed && !matcher.uses_hint();
  if (parallel && n > 1) {
    precomputed.resize(n);
    parallel_for(n - 1, [&](std::size_t k) { precomputed[k + 1] = matcher.locate(frames[k + 1], start); });
  }

  Point2d last = start;
  for (std::size_t f = 1; f < n; ++f) {
    const FrameMatch m = parallel ? std::move(precomputed[f]) : matcher.locate(frames[f], last);
    FrameRecord& rec = result.frames[f];
    rec.frame = static_cast<int>(f);
    rec.nn_ratio = m.nn_ratio;
    rec.status = m.status;
    rec.landscape = m.landscape;
    if (m.out_of_bounds || !window_fits(m.position, win, w, h)) {
      rec.prediction = last;
      rec.matched = false;
      rec.out_of_bounds = true;
      rec.status = "out_of_bounds";
    } else if (scheme.ratio_threshold && m.nn_ratio > *scheme.ratio_threshold) {
      rec.prediction = last;
      rec.matched = false;
      rec.status = "ratio_rejected";
    } else {
      rec.prediction = m.position;
      rec.matched = true;
      last = m.position;
    }
    if (scheme.mode == ReferenceMode::Previous && (rec.matched || scheme.reencode_held)) {
      matcher.set_reference(frames[f], last);
    }
  }
  return result;
}

std::vector<stats::FrameError> frame_errors(const TrackResult& result, std::span<const Point2d> truth) {
  if (truth.size() < result.frames.size()) {
    throw InvalidInput(fmt::format("{} labels for {} frames", truth.size(), result.frames.size()));
  }
  std::vector<stats::FrameError> out;
  for (std::size_t f = 1; f < result.frames.size(); ++f) {
    const auto& rec = result.frames[f];
    if (!rec.matched && !rec.out_of_bounds && result.scheme.unmatched == UnmatchedPolicy::AssignDiagonal) {
      out.push_back({rec.frame, static_cast<double>(result.width), static_cast<double>(result.height)});
    } else {
      out.push_back({rec.frame, rec.prediction.x - truth[f].x, rec.prediction.y - truth[f].y});
    }
  }
  return out;
}

std::vector<double> ci_line(int n_frames, double confidence) {
  if (n_frames < 1) throw InvalidInput("ci_line needs at least one frame");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_frames));
  for (int i = 1; i <= n_frames; ++i) out.push_back(stats::chi2_inv(confidence, 2.0 * i));
  return out;
}

TrackReport report(std::span<const stats::FrameError> errors, const stats::ErrorModel& model,
                   const stats::EmpiricalCdf& distance_cdf, std::optional<double> diagonal) {
  if (errors.empty()) throw InvalidInput("report: no frame errors");
  model.validate();
  TrackReport r;
  r.errors.assign(errors.begin(), errors.end());
  r.diagonal = diagonal;
  double running = 0.0;
  double weighted = 0.0;
  for (const auto& e : errors) {
    const double px = std::hypot(e.dx, e.dy);
    r.error_px.push_back(px);
    const double s = stats::standardized_squared_error(e, model);
    r.standardized.push_back(s);
    running += s;
    r.cumulative.push_back(running);
    weighted += stats::weighted_error(px, distance_cdf);
    r.max_error = std::max(r.max_error, px);
    if (diagonal && std::abs(px - *diagonal) <= 1e-9 * *diagonal) r.diverged = true;
  }
  const double n = static_cast<double>(errors.size());
  r.mean_error = std::accumulate(r.error_px.begin(), r.error_px.end(), 0.0) / n;
  r.weighted_mean_error = weighted / n;
  r.sorted_errors = r.error_px;
  std::sort(r.sorted_errors.begin(), r.sorted_errors.end(), std::greater<>());
  r.ci = ci_line(static_cast<int>(errors.size()));
  for (std::size_t i = 0; i < r.cumulative.size(); ++i) r.crossed_ci = r.crossed_ci || r.cumulative[i] > r.ci[i];
  r.chi2 = stats::chi2_statistic(errors, model);
  return r;
}

TrackReport report(const TrackResult& result, std::span<const Point2d> truth, const stats::ErrorModel& model,
                   const stats::EmpiricalCdf& distance_cdf) {
  const auto errors = frame_errors(result, truth);
  TrackReport r = report(errors, model, distance_cdf, match::unmatched_error(result.width, result.height));
  for (std::size_t f = 1; f < result.frames.size(); ++f) {
    if (result.frames[f].out_of_bounds) {
      ++r.out_of_bounds;
    } else if (!result.frames[f].matched) {
      ++r.unmatched;
    }
  }
  return r;
}

std::size_t nn_within_threshold(const match::SsrLandscape& land, Point2d truth, double threshold) {
  if (land.empty()) throw InvalidInput("nn_within_threshold: empty landscape");
  std::vector<std::size_t> order(land.ssr.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return land.ssr[a] < land.ssr[b]; });
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (distance(land.grid.center(order[rank]).to_point(), truth) > threshold) return rank;
  }
  return order.size();
}

std::vector<Point2d> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "frame,x,y") throw FormatError(path.string() + ": expected header frame,x,y");
  std::vector<Point2d> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string fr, x, y;
    if (!std::getline(ss, fr, ',') || !std::getline(ss, x, ',') || !std::getline(ss, y)) {
      throw FormatError(fmt::format("{}:{}: expected three fields", path.string(), lineno));
    }
    try {
      if (std::stoi(fr) != static_cast<int>(out.size())) {
        throw FormatError(fmt::format("{}:{}: frame {} out of sequence", path.string(), lineno, fr));
      }
      out.push_back({std::stod(x), std::stod(y)});
    } catch (const std::logic_error&) {
      throw FormatError(fmt::format("{}:{}: malformed row '{}'", path.string(), lineno, line));
    }
  }
  return out;
}

void write_labels_csv(std::span<const Point2d> labels, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "frame,x,y\n";
  for (std::size_t i = 0; i < labels.size(); ++i) f << fmt::format("{},{:.17g},{:.17g}\n", i, labels[i].x, labels[i].y);
}

std::vector<std::filesystem::path> frame_files(const std::filesystem::path& dir, int take_every) {
  if (take_every < 1) throw InvalidInput("take-every must be at least 1");
  const auto all = list_images(dir);
  std::vector<std::filesystem::path> out;
  for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(take_every)) out.push_back(all[i]);
  return out;
}

void write_predictions_csv(const TrackResult& result, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "frame,pred_x,pred_y,matched,status,nn_ratio\n";
  for (const auto& r : result.frames) {
    f << fmt::format("{},{:.6f},{:.6f},{},{},{:.6f}\n", r.frame, r.prediction.x, r.prediction.y, r.matched ? 1 : 0,
                     r.status, r.nn_ratio);
  }
}

void write_report_csv(const TrackResult& result, const TrackReport& rep, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "frame,pred_x,pred_y,err_px,e_std,cumulative,ci\n";
  for (std::size_t i = 0; i < rep.errors.size(); ++i) {
    const auto& rec = result.frames.at(i + 1);
    f << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", rec.frame, rec.prediction.x, rec.prediction.y,
                     rep.error_px[i], rep.standardized[i], rep.cumulative[i], rep.ci[i]);
  }
}

nlohmann::json report_json(const TrackResult& result, const TrackReport& rep, const stats::ErrorModel& model) {
  return {{"matcher", result.matcher},
          {"scheme",
           {{"mode", to_string(result.scheme.mode)},
            {"unmatched", to_string(result.scheme.unmatched)},
            {"ratio_threshold",
             result.scheme.ratio_threshold ? nlohmann::json(*result.scheme.ratio_threshold) : nlohmann::json()}}},
          {"condition", {{"name", model.condition}, {"sigma_x", model.sigma_x}, {"sigma_y", model.sigma_y}}},
          {"frames", result.frames.size()},
          {"evaluated_frames", rep.errors.size()},
          {"mean_error_px", rep.mean_error},
          {"max_error_px", rep.max_error},
          {"weighted_mean_error_px", json_number(rep.weighted_mean_error)},
          {"diagonal_px", rep.diagonal ? nlohmann::json(*rep.diagonal) : nlohmann::json()},
          {"diverged", rep.diverged},
          {"crossed_ci", rep.crossed_ci},
          {"unmatched_frames", rep.unmatched},
          {"out_of_bounds_frames", rep.out_of_bounds},
          {"chi2",
           {{"statistic", rep.chi2.statistic},
            {"dof", rep.chi2.dof},
            {"p_value", rep.chi2.p_value},
            {"underflow", rep.chi2.underflow}}},
          {"final_cumulative", rep.cumulative.back()},
          {"final_ci", rep.ci.back()}};
}

void write_report_plots(const TrackReport& rep, const std::filesystem::path& dir) {
  std::vector<double> rank(rep.sorted_errors.size());
  std::iota(rank.begin(), rank.end(), 1.0);
  svg::write_file(dir / "sorted_errors.svg",
                  svg::render({"Sorted errors", "rank", "error (px)", {{"error", rank, rep.sorted_errors}}}));

  std::vector<double> frame(rep.cumulative.size());
  std::iota(frame.begin(), frame.end(), 1.0);
  svg::write_file(dir / "cumulative.svg",
                  svg::render({"Cumulative standardized squared error",
                               "frame",
                               "sum of standardized squared errors",
                               {{"cumulative", frame, rep.cumulative}, {"99% CI", frame, rep.ci, "#d62728", true}}}));

  const auto pp = stats::pp_plot_data(rep.standardized);
  std::vector<double> px, py;
  for (const auto& p : pp) {
    px.push_back(p.theoretical);
    py.push_back(p.empirical);
  }
  svg::write_file(dir / "pp_plot.svg",
                  svg::render({"P-P plot against chi-square(2)",
                               "theoretical percentile",
                               "empirical percentile",
                               {{"errors", px, py, "#1f77b4", false, true}, {"x = y", {0, 1}, {0, 1}, "#7f7f7f", true}}}));
}

void write_landscape_csv(const match::SsrLandscape& land, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "x,y,ssr\n";
  for (int j = 0; j < land.grid.ny; ++j) {
    for (int i = 0; i < land.grid.nx; ++i) {
      const Pixel c = land.grid.center(i, j);
      f << fmt::format("{},{},{:.10g}\n", c.x, c.y, land.at(i, j));
    }
  }
}

}  // namespace dfetrack::tracking
