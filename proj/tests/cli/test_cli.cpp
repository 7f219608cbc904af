#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "dfetrack/image_io.hpp"
#include "dfetrack/synthgen.hpp"
#include "dfetrack/tracker.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace dfetrack;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run dfetrack_cli(const std::string& args) {
  const std::string cmd = std::string(DFETRACK_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// 12-frame jittered sequence with a planted blob.
fs::path make_sequence(const testsupport::TempDir& tmp, std::uint64_t seed = 3) {
  auto spec = synth::SynthSpec::centered(97, 97, 12, seed);
  spec.motion.kind = synth::MotionPath::Kind::Jitter;
  spec.motion.amplitude = {1.0, 1.0};
  const fs::path dir = tmp / "seq";
  synth::write_sequence(synth::generate(spec), dir);
  return dir;
}

}  // namespace

TEST(Cli, HelpAndVersion) {
  const auto help = dfetrack_cli("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* cmd : {"convert", "ingest", "train", "match", "track", "calibrate", "synth", "report"}) {
    EXPECT_NE(help.out.find(cmd), std::string::npos) << cmd;
  }
  const auto track_help = dfetrack_cli("track --help");
  EXPECT_EQ(track_help.code, 0);
  for (const char* flag : {"--labels", "--matcher", "--scheme", "--condition", "--seed", "--out", "--ratio-threshold"}) {
    EXPECT_NE(track_help.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_EQ(dfetrack_cli("--version").code, 0);
}

TEST(Cli, ExitCodes) {
  testsupport::TempDir tmp("cli_exit");
  EXPECT_EQ(dfetrack_cli("").code, 2);
  EXPECT_EQ(dfetrack_cli("track").code, 2);
  EXPECT_EQ(dfetrack_cli("convert a.png b.png --to hsv").code, 2);
  EXPECT_EQ(dfetrack_cli("report " + q(tmp / "missing.csv") + " --out " + q(tmp / "r")).code, 4);

  write_file(tmp / "err.csv", "frame,dx,dy\n1,0.5,0.5\n");
  EXPECT_EQ(dfetrack_cli("report " + q(tmp / "err.csv") + " --condition unknown --out " + q(tmp / "r")).code, 2);
  write_file(tmp / "bad.csv", "frame,dx,dy\n1,abc,0.5\n");
  EXPECT_EQ(dfetrack_cli("report " + q(tmp / "bad.csv") + " --out " + q(tmp / "r")).code, 4);
  write_file(tmp / "nan.csv", "frame,dx,dy\n1,nan,0.5\n2,0.1,0.2\n");
  EXPECT_EQ(dfetrack_cli("report " + q(tmp / "nan.csv") + " --out " + q(tmp / "r") + " --samples 1000 --seed 1").code, 3);
}

TEST(Cli, ConvertWhiteToLab01) {
  testsupport::TempDir tmp("cli_convert");
  const PlanarImage white(4, 3, 3, ColorSpace::RGB01, 1.0);
  write_image(tmp / "white.png", white);
  ASSERT_EQ(dfetrack_cli("convert " + q(tmp / "white.png") + " " + q(tmp / "lab.png") + " --to lab01").code, 0);
  const auto lab = read_image(tmp / "lab.png");
  // The output is 8-bit, so 0.5 lands within half a code value.
  EXPECT_NEAR(lab.at(2, 1, 0), 1.0, 1e-12);
  EXPECT_NEAR(lab.at(2, 1, 1), 0.5, 0.5 / 255 + 1e-12);
  EXPECT_NEAR(lab.at(2, 1, 2), 0.5, 0.5 / 255 + 1e-12);
  EXPECT_TRUE(fs::exists(tmp / "lab.png.run.json"));
}

TEST(Cli, ConvertGrayIsIdempotentAndDirectoryKeepsCount) {
  testsupport::TempDir tmp("cli_gray");
  const auto seq = make_sequence(tmp);
  ASSERT_EQ(dfetrack_cli("convert " + q(seq) + " " + q(tmp / "g1") + " --to gray").code, 0);
  EXPECT_EQ(list_images(tmp / "g1").size(), list_images(seq).size());
  ASSERT_EQ(dfetrack_cli("convert " + q(tmp / "g1") + " " + q(tmp / "g2") + " --to gray").code, 0);
  for (const auto& f : list_images(tmp / "g1")) {
    EXPECT_EQ(slurp(f), slurp(tmp / "g2" / f.filename())) << f;
  }
}

TEST(Cli, MatchSameFrameReturnsReference) {
  testsupport::TempDir tmp("cli_match");
  const auto seq = make_sequence(tmp);
  const auto frame = q(seq / "frame_0000.png");
  for (const char* matcher : {"raw", "lk"}) {
    const auto r = dfetrack_cli(std::string("match --matcher ") + matcher + " --ref-frame " + frame +
                                " --ref-x 48.3 --ref-y 47.6 --target " + frame);
    ASSERT_EQ(r.code, 0) << matcher;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_NEAR(j["prediction"][0].get<double>(), 48.3, 1e-6) << matcher;
    EXPECT_NEAR(j["prediction"][1].get<double>(), 47.6, 1e-6) << matcher;
  }
}

TEST(Cli, MatchShiftedFrameAndLandscape) {
  testsupport::TempDir tmp("cli_match_shift");
  const auto seq = make_sequence(tmp);
  const auto truth = tracking::read_labels_csv(seq / "labels.csv");
  const auto r = dfetrack_cli("match --matcher raw --ref-frame " + q(seq / "frame_0000.png") +
                              " --ref-x " + std::to_string(truth[0].x) + " --ref-y " + std::to_string(truth[0].y) +
                              " --target " + q(seq / "frame_0005.png") + " --emit-landscape " + q(tmp / "land"));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  const double ex = j["prediction"][0].get<double>() - truth[5].x;
  const double ey = j["prediction"][1].get<double>() - truth[5].y;
  EXPECT_LT(std::hypot(ex, ey), 1.5);

  const int nx = j["grid"][0], ny = j["grid"][1];
  std::ifstream csv(tmp / "land" / "landscape.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "x,y,ssr");
  int rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  EXPECT_EQ(rows, nx * ny);
  EXPECT_TRUE(fs::exists(tmp / "land" / "landscape.svg"));
}

TEST(Cli, TrackWritesReportAndIsDeterministic) {
  testsupport::TempDir tmp("cli_track");
  const auto seq = make_sequence(tmp);
  const std::string base = "track " + q(seq) + " --labels " + q(seq / "labels.csv") +
                           " --matcher raw --samples 20000 --seed 9 --out ";
  ASSERT_EQ(dfetrack_cli(base + q(tmp / "a")).code, 0);
  ASSERT_EQ(dfetrack_cli(base + q(tmp / "b")).code, 0);
  for (const char* f : {"predictions.csv", "report.csv", "report.json", "pp_plot.svg", "run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(tmp / "a" / f)) << f;
  }
  for (const char* f : {"predictions.csv", "report.csv", "neighbors.csv"}) {
    EXPECT_EQ(slurp(tmp / "a" / f), slurp(tmp / "b" / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(tmp / "a" / "run_manifest.json"));
  EXPECT_EQ(manifest["seed"].get<std::uint64_t>(), 9u);
  EXPECT_EQ(manifest["seed_source"], "flag");
  EXPECT_TRUE(manifest["versions"].contains("dfetrack"));

  // Without labels only predictions are written.
  ASSERT_EQ(dfetrack_cli("track " + q(seq) + " --matcher lk --start-x 48 --start-y 48 --out " + q(tmp / "c")).code, 0);
  EXPECT_TRUE(fs::exists(tmp / "c" / "predictions.csv"));
  EXPECT_FALSE(fs::exists(tmp / "c" / "report.csv"));
}

TEST(Cli, MissingSeedIsRecorded) {
  testsupport::TempDir tmp("cli_seed");
  write_file(tmp / "err.csv", "frame,dx,dy\n1,0.5,0.5\n2,-0.2,0.1\n");
  ASSERT_EQ(dfetrack_cli("report " + q(tmp / "err.csv") + " --samples 1000 --out " + q(tmp / "r")).code, 0);
  const auto m = nlohmann::json::parse(slurp(tmp / "r" / "run_manifest.json"));
  EXPECT_EQ(m["seed_source"], "entropy");
  const auto seed = m["seed"].get<std::uint64_t>();
  ASSERT_EQ(dfetrack_cli("report " + q(tmp / "err.csv") + " --samples 1000 --seed " + std::to_string(seed) +
                         " --out " + q(tmp / "s"))
                .code,
            0);
  EXPECT_EQ(slurp(tmp / "r" / "thresholds.csv"), slurp(tmp / "s" / "thresholds.csv"));
}

TEST(Cli, ReportThresholdAnchor) {
  testsupport::TempDir tmp("cli_report");
  write_file(tmp / "err.csv", "frame,dx,dy\n1,0.5,0.5\n2,-0.2,0.1\n3,1.0,-0.4\n");
  ASSERT_EQ(dfetrack_cli("report " + q(tmp / "err.csv") + " --condition static_face_mole --seed 4 --out " + q(tmp / "r")).code, 0);
  std::ifstream f(tmp / "r" / "thresholds.csv");
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, "alpha,pixels,standard_error");
  double last = 0;
  while (std::getline(f, line)) last = std::stod(line.substr(line.find(',') + 1));
  EXPECT_NEAR(last, 2.789, 0.05);
}

TEST(Cli, CalibrateProtocolShapeAndDegenerate) {
  testsupport::TempDir tmp("cli_calibrate");
  CounterRng rng(11);
  std::ostringstream rel;
  rel << "image_id,attempt,x,y\n";
  for (int i = 0; i < 15; ++i) {
    const double cx = 50 + 20 * i, cy = 40 + 10 * i;
    for (int a = 0; a < 6; ++a) rel << i << ',' << a << ',' << cx + 1.2 * rng.normal() << ',' << cy + 0.8 * rng.normal() << '\n';
  }
  write_file(tmp / "rel.csv", rel.str());
  const auto r = dfetrack_cli("calibrate " + q(tmp / "rel.csv") + " --condition mine --out " + q(tmp / "models.json"));
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["samples"], 90);
  EXPECT_TRUE(fs::exists(tmp / "models.json"));

  write_file(tmp / "same.csv", "image_id,attempt,x,y\n0,0,5,5\n0,1,5,5\n");
  EXPECT_EQ(dfetrack_cli("calibrate " + q(tmp / "same.csv") + " --condition mine").code, 2);
}

TEST(Cli, SynthAndIngestAreSeeded) {
  testsupport::TempDir tmp("cli_synth");
  write_file(tmp / "spec.json", R"({"width": 64, "height": 64, "frames": 3})");
  ASSERT_EQ(dfetrack_cli("synth " + q(tmp / "spec.json") + " " + q(tmp / "s1") + " --seed 5").code, 0);
  ASSERT_EQ(dfetrack_cli("synth " + q(tmp / "spec.json") + " " + q(tmp / "s2") + " --seed 5").code, 0);
  EXPECT_EQ(slurp(tmp / "s1" / "frame_0002.png"), slurp(tmp / "s2" / "frame_0002.png"));
  EXPECT_EQ(slurp(tmp / "s1" / "labels.csv"), slurp(tmp / "s2" / "labels.csv"));

  ASSERT_EQ(dfetrack_cli("ingest " + q(tmp / "s1") + " " + q(tmp / "m1.csv") + " --seed 2").code, 0);
  ASSERT_EQ(dfetrack_cli("ingest " + q(tmp / "s1") + " " + q(tmp / "m2.csv") + " --seed 2").code, 0);
  EXPECT_EQ(slurp(tmp / "m1.csv"), slurp(tmp / "m2.csv"));
}

TEST(Cli, TrainTinyModelIsDeterministic) {
  testsupport::TempDir tmp("cli_train");
  const auto seq = make_sequence(tmp);
  ASSERT_EQ(dfetrack_cli("ingest " + q(seq) + " " + q(tmp / "crops.csv") + " --seed 1").code, 0);
  write_file(tmp / "tiny.json",
             R"({"input_size": 31, "input_channels": 3, "encoder_blocks": [)"
             R"({"filters": 2, "kernel": 7}, {"filters": 2, "kernel": 7}, {"filters": 2, "kernel": 7},)"
             R"({"filters": 4, "kernel": 7}, {"filters": 4, "kernel": 7}]})");
  const std::string base = "train " + q(tmp / "crops.csv") + " --config " + q(tmp / "tiny.json") +
                           " --epochs 2 --batch 8 --seed 3 --out ";
  ASSERT_EQ(dfetrack_cli(base + q(tmp / "a.model")).code, 0);
  ASSERT_EQ(dfetrack_cli(base + q(tmp / "b.model")).code, 0);
  EXPECT_EQ(slurp(tmp / "a.model"), slurp(tmp / "b.model"));
  EXPECT_EQ(slurp(tmp / "a_loss.csv"), slurp(tmp / "b_loss.csv"));

  // The trained model drives the dfe matcher; the same frame gives the reference point.
  const auto frame = q(seq / "frame_0000.png");
  const auto r = dfetrack_cli("match --matcher dfe --model " + q(tmp / "a.model") + " --ref-frame " + frame +
                              " --ref-x 48 --ref-y 48 --target " + frame);
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["prediction"][0].get<double>(), 48.0, 1e-6);
  EXPECT_NEAR(j["prediction"][1].get<double>(), 48.0, 1e-6);
}
