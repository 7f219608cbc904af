#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfetrack/cae.hpp"
#include "dfetrack/evalstat.hpp"
#include "dfetrack/flow_lk.hpp"
#include "dfetrack/geometry.hpp"
#include "dfetrack/matchcore.hpp"
#include "dfetrack/raster.hpp"

namespace dfetrack::tracking {

enum class ReferenceMode { Fixed, Previous };
enum class UnmatchedPolicy { AssignDiagonal, HoldLast };

struct TrackScheme {
  ReferenceMode mode = ReferenceMode::Fixed;
  UnmatchedPolicy unmatched = UnmatchedPolicy::AssignDiagonal;
  // Frames whose nn_ratio exceeds this are unmatched.
  std::optional<double> ratio_threshold;
  // Previous-frame mode: re-encode at the held position after an unmatched
  // frame instead of keeping the last reference.
  bool reencode_held = false;

  void validate() const;
};

const char* to_string(ReferenceMode m);
const char* to_string(UnmatchedPolicy p);

// What a matcher reports for one frame.
struct FrameMatch {
  Point2d position;
  bool out_of_bounds = false;
  double nn_ratio = 0.0;
  double ssr_min = 0.0;
  double curvature = 0.0;
  std::string status;
  std::shared_ptr<const match::SsrLandscape> landscape;  // descriptor matchers only
};

class FeatureMatcher {
 public:
  virtual ~FeatureMatcher() = default;
  virtual std::string name() const = 0;
  // Side of the square window the reference occupies.
  virtual int window() const = 0;
  // Captures the reference feature around `at` in `frame` (any color space
  // the matcher accepts; RGB01 frames always work).
  virtual void set_reference(const PlanarImage& frame, Point2d at) = 0;
  // Must be safe to call concurrently once a reference is set. `hint` is
  // the last accepted prediction.
  virtual FrameMatch locate(const PlanarImage& frame, Point2d hint) const = 0;
  // True when locate() depends on `hint`, which forces sequential tracking.
  virtual bool uses_hint() const { return false; }
};

// Maps a window centred at a pixel to a descriptor, and a frame to an SSR
// landscape over every admissible centre.
class DescriptorExtractor {
 public:
  virtual ~DescriptorExtractor() = default;
  virtual std::string name() const = 0;
  virtual int window() const = 0;
  virtual match::Descriptor describe(const PlanarImage& frame, Pixel center) const = 0;
  // Default: describe() at every stride-1 grid centre.
  virtual match::SsrLandscape landscape(const PlanarImage& frame, const match::Descriptor& ref) const;
};

// Deep feature encodings; landscapes are evaluated fully convolutionally.
class DfeExtractor : public DescriptorExtractor {
 public:
  explicit DfeExtractor(std::shared_ptr<const cae::CaeModel> model);
  std::string name() const override { return "dfe"; }
  int window() const override;
  match::Descriptor describe(const PlanarImage& frame, Pixel center) const override;
  match::SsrLandscape landscape(const PlanarImage& frame, const match::Descriptor& ref) const override;

 private:
  std::shared_ptr<const cae::CaeModel> model_;
};

// Raw LAB01 window samples as the descriptor: plain template matching by
// sum of squared differences.
class RawPatchExtractor : public DescriptorExtractor {
 public:
  explicit RawPatchExtractor(int window = match::kMatchWindow);
  std::string name() const override { return "raw"; }
  int window() const override { return window_; }
  match::Descriptor describe(const PlanarImage& frame, Pixel center) const override;
  match::SsrLandscape landscape(const PlanarImage& frame, const match::Descriptor& ref) const override;

 private:
  int window_;
};

// SSR-landscape minimisation with subpixel refinement. The reference is
// encoded at the nearest pixel and predictions are shifted back by the
// rounding offset.
class DescriptorMatcher : public FeatureMatcher {
 public:
  explicit DescriptorMatcher(std::shared_ptr<const DescriptorExtractor> extractor, bool keep_landscapes = false);
  std::string name() const override { return extractor_->name(); }
  int window() const override { return extractor_->window(); }
  void set_reference(const PlanarImage& frame, Point2d at) override;
  FrameMatch locate(const PlanarImage& frame, Point2d hint) const override;
  const match::Descriptor& reference() const { return reference_; }

 private:
  std::shared_ptr<const DescriptorExtractor> extractor_;
  match::Descriptor reference_;
  Point2d offset_{0.0, 0.0};  // reference point minus the pixel it was encoded at
  bool keep_landscapes_;
};

// Pyramidal Lucas-Kanade on grayscale frames. The initial guess is the
// reference point unless `guess_from_hint` is set. Frames too small for the
// requested depth use as many levels as fit.
class LkMatcher : public FeatureMatcher {
 public:
  explicit LkMatcher(lk::FlowWindow win = {}, bool guess_from_hint = false);
  std::string name() const override { return "lk"; }
  int window() const override { return match::kMatchWindow; }
  void set_reference(const PlanarImage& frame, Point2d at) override;
  FrameMatch locate(const PlanarImage& frame, Point2d hint) const override;
  bool uses_hint() const override { return guess_from_hint_; }

 private:
  lk::FlowWindow win_;
  lk::FlowWindow active_;  // win_ with max_level capped to the frame size
  bool guess_from_hint_;
  ImagePyramid reference_;
  Point2d point_;
};

struct FrameRecord {
  int frame = 0;
  Point2d prediction;
  bool matched = true;        // false when held by the ratio test or a border
  bool out_of_bounds = false;
  double nn_ratio = 0.0;
  std::string status;
  std::shared_ptr<const match::SsrLandscape> landscape;
};

struct TrackResult {
  Point2d start;
  int width = 0;
  int height = 0;
  std::string matcher;
  TrackScheme scheme;
  std::vector<FrameRecord> frames;  // frames[0] is the start frame
};

// Frame 0 defines the reference at `start`; every later frame is matched.
TrackResult track(std::span<const PlanarImage> frames, Point2d start, FeatureMatcher& matcher,
                  const TrackScheme& scheme);

// Prediction minus truth for frames 1..N-1. Unmatched frames under
// AssignDiagonal get (width, height), whose norm is the image diagonal.
std::vector<stats::FrameError> frame_errors(const TrackResult& result, std::span<const Point2d> truth);

// chi2_inv(0.99, 2i) for i = 1..n.
std::vector<double> ci_line(int n_frames, double confidence = 0.99);

struct TrackReport {
  std::vector<stats::FrameError> errors;
  std::vector<double> error_px;
  std::vector<double> sorted_errors;  // descending
  std::vector<double> standardized;
  std::vector<double> cumulative;
  std::vector<double> ci;
  double mean_error = 0.0;
  double max_error = 0.0;
  double weighted_mean_error = 0.0;  // +inf when any error lies beyond the simulated CDF
  bool diverged = false;             // some error equals the image diagonal
  std::optional<double> diagonal;
  bool crossed_ci = false;           // cumulative series exceeded the CI line at some frame
  stats::ChiSquareReport chi2;
  std::size_t unmatched = 0;
  std::size_t out_of_bounds = 0;
};

TrackReport report(std::span<const stats::FrameError> errors, const stats::ErrorModel& model,
                   const stats::EmpiricalCdf& distance_cdf, std::optional<double> diagonal = std::nullopt);
TrackReport report(const TrackResult& result, std::span<const Point2d> truth, const stats::ErrorModel& model,
                   const stats::EmpiricalCdf& distance_cdf);

// Rank (by ascending SSR, ties in grid order) of the first centre farther
// than `threshold` from `truth`, minus one.
std::size_t nn_within_threshold(const match::SsrLandscape& land, Point2d truth, double threshold);

// Labels CSV (frame,x,y) with frames 0..N-1 in order.
std::vector<Point2d> read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(std::span<const Point2d> labels, const std::filesystem::path& path);

// Image files of `dir` in name order, keeping every k-th.
std::vector<std::filesystem::path> frame_files(const std::filesystem::path& dir, int take_every = 1);

void write_predictions_csv(const TrackResult& result, const std::filesystem::path& path);
// frame,pred_x,pred_y,err_px,e_std,cumulative,ci
void write_report_csv(const TrackResult& result, const TrackReport& rep, const std::filesystem::path& path);
nlohmann::json report_json(const TrackResult& result, const TrackReport& rep, const stats::ErrorModel& model);
// sorted_errors.svg, cumulative.svg, pp_plot.svg in `dir`.
void write_report_plots(const TrackReport& rep, const std::filesystem::path& dir);
void write_landscape_csv(const match::SsrLandscape& land, const std::filesystem::path& path);

}  // namespace dfetrack::tracking
