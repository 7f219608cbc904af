#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <fstream>

#include "dfetrack/error.hpp"
#include "dfetrack/synthgen.hpp"
#include "dfetrack/tracker.hpp"
#include "support.hpp"

using namespace dfetrack;
using namespace dfetrack::tracking;

namespace {

// Replays scripted matches and counts reference updates.
class ScriptedMatcher : public FeatureMatcher {
 public:
  explicit ScriptedMatcher(std::vector<FrameMatch> script, bool hint = false)
      : script_(std::move(script)), hint_(hint) {}
  std::string name() const override { return "scripted"; }
  int window() const override { return 5; }
  void set_reference(const PlanarImage& frame, Point2d at) override {
    references.push_back(at);
    frame_of_reference.push_back(static_cast<int>(frame.at(0, 0, 0)));
  }
  FrameMatch locate(const PlanarImage& frame, Point2d hint) const override {
    hints.push_back(hint);
    return script_.at(static_cast<std::size_t>(frame.at(0, 0, 0)));
  }
  bool uses_hint() const override { return hint_; }

  std::vector<Point2d> references;
  std::vector<int> frame_of_reference;
  mutable std::vector<Point2d> hints;

 private:
  std::vector<FrameMatch> script_;
  bool hint_;
};

// Frames tagged with their index in pixel (0, 0).
std::vector<PlanarImage> tagged_frames(int n, int w = 40, int h = 30) {
  std::vector<PlanarImage> out;
  for (int i = 0; i < n; ++i) {
    PlanarImage img(w, h, 3, ColorSpace::RGB01);
    img.at(0, 0, 0) = i;
    out.push_back(std::move(img));
  }
  return out;
}

FrameMatch at(double x, double y, double ratio = 0.1) {
  FrameMatch m;
  m.position = {x, y};
  m.nn_ratio = ratio;
  m.status = "ok";
  return m;
}

const stats::ErrorModel kUnit{"unit", 1.0, 1.0};

synth::Sequence jitter_sequence(int frames, std::uint64_t seed) {
  auto spec = synth::SynthSpec::centered(97, 97, frames, seed);
  spec.motion.kind = synth::MotionPath::Kind::Jitter;
  spec.motion.amplitude = {2.0, 2.0};
  return synth::generate(spec);
}

}  // namespace

TEST(Track, FixedReferenceRecordsEveryFrame) {
  const auto frames = tagged_frames(4);
  ScriptedMatcher m({{}, at(10, 11), at(12, 13), at(14, 15)});
  const auto r = track(frames, {10, 10}, m, {});
  ASSERT_EQ(r.frames.size(), 4u);
  EXPECT_EQ(r.frames[0].status, "reference");
  EXPECT_EQ(r.frames[3].prediction, (Point2d{14, 15}));
  EXPECT_EQ(m.references.size(), 1u);
  const std::vector<Point2d> truth = {{10, 10}, {10, 10}, {12, 12}, {14, 14}};
  const auto e = frame_errors(r, truth);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].frame, 1);
  EXPECT_EQ(e[0].dy, 1.0);
  EXPECT_EQ(e[2].dx, 0.0);
}

TEST(Track, PreviousFrameReencodesPrediction) {
  const auto frames = tagged_frames(4);
  ScriptedMatcher m({{}, at(10, 11), at(12, 13), at(14, 15)});
  TrackScheme s;
  s.mode = ReferenceMode::Previous;
  track(frames, {10, 10}, m, s);
  EXPECT_EQ(m.references, (std::vector<Point2d>{{10, 10}, {10, 11}, {12, 13}, {14, 15}}));
  EXPECT_EQ(m.frame_of_reference, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(m.hints, (std::vector<Point2d>{{10, 10}, {10, 11}, {12, 13}}));
}

TEST(Track, RatioThresholdHoldsLastAndChargesDiagonal) {
  const auto frames = tagged_frames(5);
  ScriptedMatcher m({{}, at(11, 11, 0.5), at(30, 5, 0.95), at(12, 12, 0.7), at(13, 13, 0.81)});
  TrackScheme s;
  s.ratio_threshold = 0.8;
  const auto r = track(frames, {10, 10}, m, s);
  EXPECT_FALSE(r.frames[2].matched);
  EXPECT_EQ(r.frames[2].status, "ratio_rejected");
  EXPECT_EQ(r.frames[2].prediction, (Point2d{11, 11}));
  EXPECT_TRUE(r.frames[3].matched);
  EXPECT_EQ(r.frames[4].prediction, (Point2d{12, 12}));

  const std::vector<Point2d> truth(5, Point2d{11, 11});
  const auto e = frame_errors(r, truth);
  EXPECT_EQ(e[1].dx, 40.0);
  EXPECT_EQ(e[1].dy, 30.0);
  const auto cdf = stats::simulate_distance_cdf(kUnit, 10000, 1);
  const auto rep = report(r, truth, kUnit, cdf);
  EXPECT_EQ(rep.unmatched, 2u);
  EXPECT_TRUE(rep.diverged);
  EXPECT_DOUBLE_EQ(rep.max_error, 50.0);
  EXPECT_DOUBLE_EQ(*rep.diagonal, 50.0);

  s.unmatched = UnmatchedPolicy::HoldLast;
  const auto held = report(track(frames, {10, 10}, m, s), truth, kUnit, cdf);
  EXPECT_FALSE(held.diverged);
  EXPECT_DOUBLE_EQ(held.errors[1].dx, 0.0);

  s.ratio_threshold = 1.5;
  EXPECT_THROW(track(frames, {10, 10}, m, s), InvalidInput);
}

TEST(Track, OutOfBoundsFramesAreHeld) {
  const auto frames = tagged_frames(3);
  FrameMatch oob = at(0, 0);
  oob.out_of_bounds = true;
  ScriptedMatcher m({{}, at(38.5, 10), oob});
  const auto r = track(frames, {10, 10}, m, {});
  EXPECT_TRUE(r.frames[1].out_of_bounds);  // window around (39, 10) leaves the frame
  EXPECT_TRUE(r.frames[2].out_of_bounds);
  EXPECT_EQ(r.frames[2].prediction, (Point2d{10, 10}));
  const std::vector<Point2d> truth(3, Point2d{10, 10});
  const auto rep = report(r, truth, kUnit, stats::simulate_distance_cdf(kUnit, 1000, 1));
  EXPECT_EQ(rep.out_of_bounds, 2u);
  EXPECT_EQ(rep.max_error, 0.0);
}

TEST(Track, InputValidation) {
  auto frames = tagged_frames(3);
  ScriptedMatcher m({{}, at(10, 10), at(10, 10)});
  EXPECT_THROW(track(frames, {1, 1}, m, {}), BorderError);
  EXPECT_THROW(track(std::vector<PlanarImage>{}, {10, 10}, m, {}), InvalidInput);
  frames[2] = PlanarImage(41, 30, 3, ColorSpace::RGB01);
  EXPECT_THROW(track(frames, {10, 10}, m, {}), InvalidInput);
  const auto r = track(tagged_frames(3), {10, 10}, m, {});
  EXPECT_THROW(frame_errors(r, std::vector<Point2d>(2)), InvalidInput);
}

TEST(Track, StationarySequenceWithRawPatches) {
  const auto seq = synth::generate(synth::SynthSpec::centered(81, 81, 4, 3));
  DescriptorMatcher m(std::make_shared<RawPatchExtractor>());
  TrackScheme s;
  s.ratio_threshold = 0.8;
  const auto r = track(seq.frames, seq.truth[0], m, s);
  for (std::size_t f = 1; f < r.frames.size(); ++f) {
    EXPECT_TRUE(r.frames[f].matched);
    EXPECT_LT(distance(r.frames[f].prediction, seq.truth[f]), 1e-12);
    EXPECT_EQ(r.frames[f].nn_ratio, 0.0);
  }
}

TEST(Track, JitterWithRawPatchesAndLk) {
  const auto seq = jitter_sequence(8, 11);
  for (auto mode : {ReferenceMode::Fixed, ReferenceMode::Previous}) {
    TrackScheme s;
    s.mode = mode;
    DescriptorMatcher raw(std::make_shared<RawPatchExtractor>());
    LkMatcher lk;
    for (FeatureMatcher* m : {static_cast<FeatureMatcher*>(&raw), static_cast<FeatureMatcher*>(&lk)}) {
      const auto r = track(seq.frames, seq.truth[0], *m, s);
      for (std::size_t f = 1; f < r.frames.size(); ++f)
        EXPECT_LT(distance(r.frames[f].prediction, seq.truth[f]), 0.5)
            << m->name() << " " << to_string(mode) << " frame " << f;
    }
  }
}

// Two identical copies of the feature make the best and second-best SSR
// equal, so the ratio test rejects every frame.
TEST(Track, TwinFeaturesAreRejectedByRatio) {
  const auto tex = testsupport::gray_to_rgb(testsupport::smooth_texture(40, 60, 4));
  PlanarImage frame(120, 60, 3, ColorSpace::RGB01);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 120; ++x) frame.at(x, y, c) = tex.at(x % 40, y, c);
  const std::vector<PlanarImage> frames(4, frame);
  DescriptorMatcher m(std::make_shared<RawPatchExtractor>());
  TrackScheme s;
  s.ratio_threshold = 0.8;
  const auto r = track(frames, {60, 30}, m, s);
  const std::vector<Point2d> truth(4, Point2d{60, 30});
  const auto rep = report(r, truth, kUnit, stats::simulate_distance_cdf(kUnit, 1000, 1));
  EXPECT_EQ(rep.unmatched, 3u);
  EXPECT_TRUE(rep.diverged);
  EXPECT_DOUBLE_EQ(rep.mean_error, std::hypot(120.0, 60.0));
}

TEST(Report, Statistics) {
  const std::vector<stats::FrameError> e = {{1, 3, 4}, {2, 0, 1}, {3, 0, 0}};
  const auto cdf = stats::simulate_distance_cdf(kUnit, 100000, 2);
  const auto r = report(e, kUnit, cdf);
  EXPECT_EQ(r.error_px, (std::vector<double>{5, 1, 0}));
  EXPECT_EQ(r.sorted_errors, (std::vector<double>{5, 1, 0}));
  EXPECT_EQ(r.cumulative, (std::vector<double>{25, 26, 26}));
  EXPECT_DOUBLE_EQ(r.mean_error, 2.0);
  EXPECT_EQ(r.max_error, 5.0);
  EXPECT_TRUE(r.crossed_ci);
  EXPECT_EQ(r.chi2.dof, 6);
  EXPECT_DOUBLE_EQ(r.chi2.statistic, 26.0);
  const double w = (weighted_error(5, cdf) + weighted_error(1, cdf)) / 3;
  EXPECT_DOUBLE_EQ(r.weighted_mean_error, w);
  EXPECT_FALSE(r.diverged);
  EXPECT_THROW(report(std::vector<stats::FrameError>{}, kUnit, cdf), InvalidInput);
}

TEST(Report, ErrorsFromTheModelStayUnderTheLine) {
  CounterRng rng(12);
  const auto cdf = stats::simulate_distance_cdf(kUnit, 1000, 2);
  int below = 0;
  const int reps = 400;
  for (int t = 0; t < reps; ++t) {
    std::vector<stats::FrameError> e;
    for (int i = 0; i < 130; ++i) e.push_back({i + 1, rng.normal(), rng.normal()});
    const auto r = report(e, kUnit, cdf);
    below += r.cumulative.back() <= r.ci.back();
  }
  EXPECT_NEAR(below / static_cast<double>(reps), 0.99, 0.02);
}

TEST(CiLine, Values) {
  const auto ci = ci_line(130);
  ASSERT_EQ(ci.size(), 130u);
  EXPECT_NEAR(ci[0], 9.210, 1e-3);
  EXPECT_NEAR(ci[129], boost::math::quantile(boost::math::chi_squared(260.0), 0.99), 1e-8);
  for (std::size_t i = 1; i < ci.size(); ++i) EXPECT_GT(ci[i], ci[i - 1]);
  EXPECT_THROW(ci_line(0), InvalidInput);
}

TEST(NnWithinThreshold, ConstructedLandscapes) {
  match::SsrLandscape land{match::position_grid(41, 41, 31, 1), {}};
  ASSERT_EQ(land.grid.size(), 121u);
  land.ssr.assign(121, 100.0);
  const Point2d truth{20, 20};
  // Five centres within 1.5 px ranked first, then a far one.
  const std::vector<std::pair<int, int>> near = {{5, 5}, {6, 5}, {5, 6}, {4, 5}, {5, 4}};
  for (std::size_t r = 0; r < near.size(); ++r) land.ssr[near[r].second * 11 + near[r].first] = r;
  land.ssr[0] = 10;
  EXPECT_EQ(nn_within_threshold(land, truth, 1.5), 5u);
  land.ssr[0] = -1;
  EXPECT_EQ(nn_within_threshold(land, truth, 1.5), 0u);
  EXPECT_THROW(nn_within_threshold(match::SsrLandscape{}, truth, 1.0), InvalidInput);
}

TEST(TrackerIo, LabelsPredictionsReportsAndPlots) {
  testsupport::TempDir dir("tracker");
  const std::vector<Point2d> labels = {{1.5, 2.25}, {3, 4}, {5.125, 6}};
  write_labels_csv(labels, dir / "labels.csv");
  EXPECT_EQ(read_labels_csv(dir / "labels.csv"), labels);
  std::ofstream(dir / "gap.csv") << "frame,x,y\n0,1,1\n2,1,1\n";
  EXPECT_THROW(read_labels_csv(dir / "gap.csv"), FormatError);
  EXPECT_THROW(read_labels_csv(dir / "none.csv"), IoError);

  const auto frames = tagged_frames(3);
  ScriptedMatcher m({{}, at(10, 11), at(12, 13)});
  const auto r = track(frames, {10, 10}, m, {});
  const std::vector<Point2d> truth(3, Point2d{10, 10});
  const auto cdf = stats::simulate_distance_cdf(kUnit, 1000, 1);
  const auto rep = report(r, truth, kUnit, cdf);
  write_predictions_csv(r, dir / "pred.csv");
  write_report_csv(r, rep, dir / "report.csv");
  write_report_plots(rep, dir.path());
  for (const char* f : {"pred.csv", "report.csv", "sorted_errors.svg", "cumulative.svg", "pp_plot.svg"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream in(dir / "report.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "frame,pred_x,pred_y,err_px,e_std,cumulative,ci");
  const auto j = report_json(r, rep, kUnit);
  EXPECT_EQ(j.at("evaluated_frames"), 2);
  EXPECT_EQ(j.at("scheme").at("mode"), "fixed");
  EXPECT_DOUBLE_EQ(j.at("max_error_px").get<double>(), std::hypot(2.0, 3.0));

  match::SsrLandscape land{match::position_grid(33, 32, 31, 1), {1, 2, 3, 4, 5, 6}};
  write_landscape_csv(land, dir / "land.csv");
  std::ifstream lin(dir / "land.csv");
  std::string all((std::istreambuf_iterator<char>(lin)), {});
  EXPECT_EQ(all, "x,y,ssr\n15,15,1\n16,15,2\n17,15,3\n15,16,4\n16,16,5\n17,16,6\n");
}

TEST(TrackerIo, FrameFilesTakeEvery) {
  testsupport::TempDir dir("tracker");
  const auto seq = synth::generate(synth::SynthSpec::centered(40, 40, 5, 1));
  synth::write_sequence(seq, dir.path());
  EXPECT_EQ(frame_files(dir.path()).size(), 5u);
  const auto every2 = frame_files(dir.path(), 2);
  ASSERT_EQ(every2.size(), 3u);
  EXPECT_EQ(every2[1].filename(), "frame_0002.png");
  EXPECT_THROW(frame_files(dir.path(), 0), InvalidInput);
}

TEST(DescriptorMatcher, CarriesSubpixelReferenceOffset) {
  const auto seq = synth::generate(synth::SynthSpec::centered(81, 81, 2, 5));
  DescriptorMatcher m(std::make_shared<RawPatchExtractor>());
  m.set_reference(seq.frames[0], {40.3, 39.8});
  const auto hit = m.locate(seq.frames[1], {0, 0});
  EXPECT_NEAR(hit.position.x, 40.3, 0.05);
  EXPECT_NEAR(hit.position.y, 39.8, 0.05);
  EXPECT_EQ(m.reference().size(), 31u * 31u * 3u);
}
