#include "commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "dfetrack/cae.hpp"
#include "dfetrack/error.hpp"
#include "dfetrack/evalstat.hpp"
#include "dfetrack/image_io.hpp"
#include "dfetrack/matchcore.hpp"
#include "dfetrack/svg.hpp"
#include "dfetrack/synthgen.hpp"
#include "dfetrack/tracker.hpp"
#include "dfetrack/trainer.hpp"
#include "dfetrack/trainpipe.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;

namespace dfetrack::cli {
namespace {

constexpr double kAlphas[] = {0.5, 0.05, 0.01};

fs::path sidecar(const fs::path& file) { return file.parent_path() / (file.filename().string() + ".run.json"); }

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<stats::ErrorModel> error_catalog(const std::string& file) {
  return file.empty() ? stats::builtin_error_models() : stats::load_error_models(file);
}

std::string csv_number(double v) {
  if (std::isfinite(v)) return fmt::format("{:.6f}", v);
  return v > 0 ? "inf" : "nan";
}

// ---------------------------------------------------------------- convert

struct ConvertArgs {
  std::string input;
  std::string output;
  std::string to = "lab01";
};

PlanarImage convert_image(const PlanarImage& img, const std::string& to) {
  if (to == "gray") return img.channels() == 1 ? img : to_grayscale(img);
  if (img.channels() != 3) throw InvalidInput("conversion to " + to + " needs a three-channel image");
  if (to == "cielab") return rgb_to_cielab(img);
  return to_lab01(img);
}

void run_convert(const ConvertArgs& a) {
  RunManifest manifest{"convert", {{"input", a.input}, {"output", a.output}, {"to", a.to}}};
  const fs::path in(a.input), out(a.output);
  if (fs::is_directory(in)) {
    const auto files = list_images(in);
    fs::create_directories(out);
    for (const auto& f : files) {
      const fs::path target = out / f.filename();
      write_image(target, convert_image(read_image(f), a.to));
      manifest.outputs.push_back(target.string());
    }
    manifest.write(out / "run_manifest.json");
    fmt::print("converted {} images into {}\n", files.size(), out.string());
    return;
  }
  write_image(out, convert_image(read_image(in), a.to));
  manifest.outputs.push_back(out.string());
  manifest.write(sidecar(out));
}

// ----------------------------------------------------------------- ingest

struct IngestArgs {
  std::string dir;
  std::string manifest;
  int stride = trainpipe::kTrainingStride;
  int window = trainpipe::kTrainingWindow;
  double heldout = 0.1;
  std::optional<std::uint64_t> seed;
};

void run_ingest(const IngestArgs& a) {
  const SeedChoice seed = choose_seed(a.seed);
  RunManifest manifest{"ingest",
                       {{"dir", a.dir},
                        {"manifest", a.manifest},
                        {"stride", a.stride},
                        {"window", a.window},
                        {"heldout_fraction", a.heldout}},
                       nlohmann::json::array(),
                       seed};
  const auto r = trainpipe::build_manifest(a.dir, seed.value, a.heldout, a.window, a.stride,
                                           [](const std::string& w) { fmt::print(stderr, "warning: {}\n", w); });
  for (const auto& s : r.skipped) fmt::print(stderr, "skipped {}: {}\n", s.path.string(), s.reason);
  // Store paths relative to the manifest so 'train' finds them without --root.
  auto crops = r.manifest;
  const fs::path manifest_dir = fs::absolute(a.manifest).parent_path();
  for (auto& e : crops.entries) {
    e.image = fs::relative(fs::absolute(a.dir) / e.image, manifest_dir).generic_string();
  }
  trainpipe::write_manifest_csv(crops, a.manifest);
  manifest.outputs.push_back(a.manifest);
  manifest.config["crops"] = r.manifest.entries.size();
  manifest.config["skipped_files"] = r.skipped.size();
  manifest.write(sidecar(a.manifest));
  fmt::print("{} crops ({} train, {} held out), {} files skipped\n", r.manifest.entries.size(),
             r.manifest.count(trainpipe::Split::Train), r.manifest.count(trainpipe::Split::Heldout), r.skipped.size());
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string manifest;
  std::string root;
  std::string out;
  std::string config;
  int epochs = 20;
  int batch = 32;
  double learning_rate = 0.002;
  std::size_t limit = 0;
  std::string checkpoint;
  int checkpoint_every = 0;
  std::string resume;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  const SeedChoice seed = choose_seed(a.seed);
  cae::CaeConfig config = a.config.empty() ? cae::CaeConfig::desk_scale() : cae::CaeConfig::from_json(read_json_file(a.config));
  config.seed = seed.value;
  const fs::path root = a.root.empty() ? fs::path(a.manifest).parent_path() : fs::path(a.root);
  const auto crop_manifest = trainpipe::read_manifest_csv(a.manifest);
  auto train = trainpipe::load_crops(crop_manifest, trainpipe::Split::Train, root, config.input_size);
  if (a.limit > 0 && train.size() > a.limit) train.resize(a.limit);
  const auto heldout = trainpipe::load_crops(crop_manifest, trainpipe::Split::Heldout, root, config.input_size);

  cae::TrainOptions opts;
  opts.epochs = a.epochs;
  opts.batch_size = a.batch;
  opts.optimizer.learning_rate = a.learning_rate;
  opts.checkpoint_every = a.checkpoint_every;
  opts.checkpoint_path = a.checkpoint;
  if (opts.checkpoint_every > 0 && a.checkpoint.empty()) throw InvalidInput("--checkpoint-every needs --checkpoint");
  opts.on_epoch = [](int epoch, double mse) { fmt::print(stderr, "epoch {:3d}  train mse {:.6f}\n", epoch, mse); };

  cae::TrainState state = [&] {
    if (a.resume.empty()) return cae::train(config, train, opts);
    auto s = cae::load_checkpoint(a.resume);
    if (!(s.model.config() == config)) {
      fmt::print(stderr, "warning: resuming with the checkpoint's model configuration\n");
    }
    cae::continue_training(s, train, opts);
    return s;
  }();

  nlohmann::json meta = {{"epochs", state.epochs_done},
                         {"batch_size", a.batch},
                         {"learning_rate", a.learning_rate},
                         {"train_crops", train.size()},
                         {"heldout_crops", heldout.size()},
                         {"loss_curve", state.loss_curve}};
  if (!heldout.empty()) {
    const double mse = cae::reconstruction_loss(state.model, heldout);
    meta["heldout_mse"] = mse;
    fmt::print("held-out mse {:.6f} over {} crops\n", mse, heldout.size());
  }
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  cae::save_model(state.model, out, meta);
  const fs::path curve = out.parent_path() / (out.stem().string() + "_loss.csv");
  cae::write_loss_curve_csv(state.loss_curve, curve);

  RunManifest manifest{"train",
                       {{"manifest", a.manifest},
                        {"root", root.string()},
                        {"model", config.to_json()},
                        {"epochs", a.epochs},
                        {"batch", a.batch},
                        {"learning_rate", a.learning_rate},
                        {"limit", a.limit},
                        {"resume", a.resume}},
                       {out.string(), curve.string()},
                       seed};
  manifest.config["training"] = meta;
  manifest.write(sidecar(out));
}

// ------------------------------------------------------------------ match

struct MatcherArgs {
  std::string matcher = "dfe";
  std::string model;
};

std::shared_ptr<const tracking::DescriptorExtractor> make_extractor(const MatcherArgs& a) {
  if (a.matcher == "raw") return std::make_shared<tracking::RawPatchExtractor>();
  if (a.model.empty()) throw InvalidInput("the dfe matcher needs --model");
  auto model = std::make_shared<const cae::CaeModel>(cae::load_model(a.model));
  return std::make_shared<tracking::DfeExtractor>(std::move(model));
}

std::unique_ptr<tracking::FeatureMatcher> make_matcher(const MatcherArgs& a, bool keep_landscapes) {
  if (a.matcher == "lk") return std::make_unique<tracking::LkMatcher>();
  return std::make_unique<tracking::DescriptorMatcher>(make_extractor(a), keep_landscapes);
}

void write_landscape(const match::SsrLandscape& land, const fs::path& dir, const std::string& stem,
                     const std::string& title) {
  fs::create_directories(dir);
  tracking::write_landscape_csv(land, dir / (stem + ".csv"));
  svg::write_file(dir / (stem + ".svg"), svg::heatmap(land.ssr, land.grid.nx, land.grid.ny, title));
}

struct MatchArgs {
  MatcherArgs m;
  std::string ref_frame;
  double ref_x = 0;
  double ref_y = 0;
  std::string target;
  std::string landscape_dir;
  std::string out;
};

void run_match(const MatchArgs& a) {
  const PlanarImage ref = read_image(a.ref_frame);
  const PlanarImage target = read_image(a.target);
  auto matcher = make_matcher(a.m, true);
  const Point2d at{a.ref_x, a.ref_y};
  matcher->set_reference(ref, at);
  const tracking::FrameMatch hit = matcher->locate(target, at);
  nlohmann::json result = {{"matcher", matcher->name()},
                           {"reference", {a.ref_x, a.ref_y}},
                           {"prediction", {hit.position.x, hit.position.y}},
                           {"status", hit.status},
                           {"out_of_bounds", hit.out_of_bounds}};
  if (hit.landscape) {
    result["ssr_min"] = hit.ssr_min;
    result["curvature"] = hit.curvature;
    result["nn_ratio"] = hit.nn_ratio;
    result["grid"] = {hit.landscape->grid.nx, hit.landscape->grid.ny};
  }
  RunManifest manifest{"match",
                       {{"matcher", a.m.matcher},
                        {"model", a.m.model},
                        {"ref_frame", a.ref_frame},
                        {"ref", {a.ref_x, a.ref_y}},
                        {"target", a.target}}};
  if (!a.landscape_dir.empty()) {
    if (!hit.landscape) throw InvalidInput("--emit-landscape needs a descriptor matcher (dfe or raw)");
    write_landscape(*hit.landscape, a.landscape_dir, "landscape", "SSR landscape");
    manifest.outputs = {(fs::path(a.landscape_dir) / "landscape.csv").string(),
                        (fs::path(a.landscape_dir) / "landscape.svg").string()};
  }
  fmt::print("{}\n", result.dump(2));
  if (!a.out.empty()) {
    write_text(a.out, result.dump(2) + "\n");
    manifest.outputs.push_back(a.out);
    manifest.write(sidecar(a.out));
  } else if (!a.landscape_dir.empty()) {
    manifest.write(fs::path(a.landscape_dir) / "run_manifest.json");
  }
}

// ------------------------------------------------------------------ track

struct TrackArgs {
  MatcherArgs m;
  std::string frames;
  std::string labels;
  std::string scheme = "fixed";
  std::optional<double> ratio;
  bool hold_last = false;
  bool reencode_held = false;
  std::string condition = "static_face_mole";
  std::string models;
  std::optional<double> start_x;
  std::optional<double> start_y;
  int take_every = 1;
  std::string out;
  std::size_t samples = stats::kDefaultSimulationSamples;
  bool landscapes = false;
  std::optional<std::uint64_t> seed;
};

void run_track(const TrackArgs& a) {
  const SeedChoice seed = choose_seed(a.seed);
  const auto files = tracking::frame_files(a.frames, a.take_every);
  if (files.empty()) throw InvalidInput("no image files in " + a.frames);
  std::vector<PlanarImage> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_image(f));

  std::vector<Point2d> truth;
  if (!a.labels.empty()) {
    const auto all = tracking::read_labels_csv(a.labels);
    // Labels follow the unfiltered frame numbering.
    for (std::size_t i = 0; i < files.size(); ++i) {
      const std::size_t k = i * static_cast<std::size_t>(a.take_every);
      if (k >= all.size()) throw InvalidInput(fmt::format("labels cover {} frames, frame {} requested", all.size(), k));
      truth.push_back(all[k]);
    }
  }
  Point2d start;
  if (a.start_x && a.start_y) {
    start = {*a.start_x, *a.start_y};
  } else if (!truth.empty()) {
    start = truth[0];
  } else {
    throw InvalidInput("give --start-x/--start-y or a labels file");
  }

  tracking::TrackScheme scheme;
  scheme.mode = a.scheme == "previous" ? tracking::ReferenceMode::Previous : tracking::ReferenceMode::Fixed;
  scheme.unmatched = a.hold_last ? tracking::UnmatchedPolicy::HoldLast : tracking::UnmatchedPolicy::AssignDiagonal;
  scheme.ratio_threshold = a.ratio;
  scheme.reencode_held = a.reencode_held;

  const auto catalog = error_catalog(a.models);
  const auto model = stats::find_error_model(catalog, a.condition);
  auto matcher = make_matcher(a.m, a.landscapes || !truth.empty());
  const auto result = tracking::track(frames, start, *matcher, scheme);

  const fs::path out(a.out);
  fs::create_directories(out);
  RunManifest manifest{"track",
                       {{"frames", a.frames},
                        {"frame_count", frames.size()},
                        {"labels", a.labels},
                        {"matcher", a.m.matcher},
                        {"model", a.m.model},
                        {"scheme", tracking::to_string(scheme.mode)},
                        {"unmatched", tracking::to_string(scheme.unmatched)},
                        {"ratio_threshold", a.ratio ? nlohmann::json(*a.ratio) : nlohmann::json()},
                        {"condition", {{"name", model.condition}, {"sigma_x", model.sigma_x}, {"sigma_y", model.sigma_y}}},
                        {"start", {start.x, start.y}},
                        {"take_every", a.take_every},
                        {"samples", a.samples}},
                       nlohmann::json::array(),
                       seed};
  tracking::write_predictions_csv(result, out / "predictions.csv");
  manifest.outputs.push_back("predictions.csv");

  if (a.landscapes) {
    for (const auto& rec : result.frames) {
      if (rec.landscape) {
        write_landscape(*rec.landscape, out / "landscapes", fmt::format("frame_{:04d}", rec.frame),
                        fmt::format("SSR landscape, frame {}", rec.frame));
      }
    }
    manifest.outputs.push_back("landscapes/");
  }

  if (!truth.empty()) {
    const auto cdf = stats::simulate_distance_cdf(model, a.samples, seed.value);
    const auto rep = tracking::report(result, truth, model, cdf);
    tracking::write_report_csv(result, rep, out / "report.csv");
    auto j = tracking::report_json(result, rep, model);
    nlohmann::json thresholds = nlohmann::json::array();
    for (double alpha : kAlphas) {
      const auto t = stats::distance_threshold(cdf, alpha);
      thresholds.push_back({{"alpha", alpha}, {"pixels", t.pixels}, {"standard_error", t.standard_error}});
    }
    j["thresholds"] = thresholds;

    // In-threshold neighbour counts need the landscapes of descriptor matchers.
    const double t99 = stats::distance_threshold(cdf, 0.01).pixels;
    std::string nn = "frame,nn_ratio,nn_within_threshold\n";
    bool any = false;
    for (std::size_t f = 1; f < result.frames.size(); ++f) {
      const auto& rec = result.frames[f];
      if (!rec.landscape) continue;
      any = true;
      nn += fmt::format("{},{:.6f},{}\n", rec.frame, rec.nn_ratio, tracking::nn_within_threshold(*rec.landscape, truth[f], t99));
    }
    if (any) {
      write_text(out / "neighbors.csv", nn);
      manifest.outputs.push_back("neighbors.csv");
    }
    write_text(out / "report.json", j.dump(2) + "\n");
    tracking::write_report_plots(rep, out);
    for (const char* f : {"report.csv", "report.json", "sorted_errors.svg", "cumulative.svg", "pp_plot.svg"}) {
      manifest.outputs.push_back(f);
    }
    fmt::print("{}: mean {:.3f} px, max {:.3f} px, weighted {}, chi2 {:.2f} (dof {}, p {:.3g}){}\n", result.matcher,
               rep.mean_error, rep.max_error, csv_number(rep.weighted_mean_error), rep.chi2.statistic, rep.chi2.dof,
               rep.chi2.p_value, rep.diverged ? ", diverged" : "");
  } else {
    fmt::print("{}: tracked {} frames\n", result.matcher, result.frames.size());
  }
  manifest.write(out / "run_manifest.json");
}

// -------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string relabels;
  std::string condition;
  std::string out;
};

void run_calibrate(const CalibrateArgs& a) {
  const auto relabels = stats::read_relabels_csv(a.relabels);
  const auto m = stats::calibrate_error_model(relabels, a.condition);
  const nlohmann::json j = {{"name", m.condition}, {"sigma_x", m.sigma_x}, {"sigma_y", m.sigma_y},
                            {"samples", relabels.size()}};
  fmt::print("{}\n", j.dump(2));
  if (a.out.empty()) return;
  // Merge into an existing catalog, replacing a condition of the same name.
  std::vector<stats::ErrorModel> catalog;
  if (fs::exists(a.out)) catalog = stats::load_error_models(a.out);
  std::erase_if(catalog, [&](const stats::ErrorModel& e) { return e.condition == m.condition; });
  catalog.push_back(m);
  stats::save_error_models(catalog, a.out);
  RunManifest manifest{"calibrate", {{"relabels", a.relabels}, {"condition", a.condition}, {"result", j}}, {a.out}};
  manifest.write(sidecar(a.out));
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& a) {
  auto j = read_json_file(a.spec);
  if (a.seed) j["seed"] = *a.seed;
  if (!j.contains("seed")) j["seed"] = choose_seed(std::nullopt).value;
  const auto spec = synth::SynthSpec::from_json(j);
  const auto seq = synth::generate(spec);
  synth::write_sequence(seq, a.out);
  RunManifest manifest{"synth", {{"spec", a.spec}, {"resolved", spec.to_json()}}, {"frame_*.png", "labels.csv"},
                       {spec.seed, !a.seed && !read_json_file(a.spec).contains("seed")}};
  manifest.write(fs::path(a.out) / "run_manifest.json");
  fmt::print("wrote {} frames to {}\n", seq.frames.size(), a.out);
}

// ----------------------------------------------------------------- report

struct ReportArgs {
  std::string errors;
  std::string condition = "static_face_mole";
  std::string models;
  std::string out;
  std::size_t samples = stats::kDefaultSimulationSamples;
  std::optional<double> diagonal;
  std::optional<std::uint64_t> seed;
};

std::vector<stats::FrameError> read_errors_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "frame,dx,dy") throw FormatError(path.string() + ": expected header frame,dx,dy");
  std::vector<stats::FrameError> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string fr, dx, dy;
    if (!std::getline(ss, fr, ',') || !std::getline(ss, dx, ',') || !std::getline(ss, dy)) {
      throw FormatError(fmt::format("{}:{}: expected three fields", path.string(), lineno));
    }
    stats::FrameError e;
    try {
      e = {std::stoi(fr), std::stod(dx), std::stod(dy)};
    } catch (const std::logic_error&) {
      throw FormatError(fmt::format("{}:{}: malformed row '{}'", path.string(), lineno, line));
    }
    if (!std::isfinite(e.dx) || !std::isfinite(e.dy)) {
      throw NumericError(fmt::format("{}:{}: non-finite error in frame {}", path.string(), lineno, e.frame));
    }
    out.push_back(e);
  }
  return out;
}

void run_report(const ReportArgs& a) {
  const SeedChoice seed = choose_seed(a.seed);
  const auto errors = read_errors_csv(a.errors);
  const auto model = stats::find_error_model(error_catalog(a.models), a.condition);
  const auto cdf = stats::simulate_distance_cdf(model, a.samples, seed.value);
  const auto rep = tracking::report(errors, model, cdf, a.diagonal);
  const fs::path out(a.out);
  fs::create_directories(out);

  std::string csv = "frame,dx,dy,err_px,e_std,cumulative,ci\n";
  for (std::size_t i = 0; i < errors.size(); ++i) {
    csv += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", errors[i].frame, errors[i].dx, errors[i].dy,
                       rep.error_px[i], rep.standardized[i], rep.cumulative[i], rep.ci[i]);
  }
  write_text(out / "report.csv", csv);

  std::string thr = "alpha,pixels,standard_error\n";
  nlohmann::json thresholds = nlohmann::json::array();
  for (double alpha : kAlphas) {
    const auto t = stats::distance_threshold(cdf, alpha);
    thr += fmt::format("{},{:.6f},{:.6f}\n", alpha, t.pixels, t.standard_error);
    thresholds.push_back({{"alpha", alpha}, {"pixels", t.pixels}, {"standard_error", t.standard_error}});
  }
  write_text(out / "thresholds.csv", thr);

  std::string pp = "theoretical,empirical\n";
  for (const auto& p : stats::pp_plot_data(rep.standardized)) pp += fmt::format("{:.6f},{:.6f}\n", p.theoretical, p.empirical);
  write_text(out / "pp_plot.csv", pp);
  tracking::write_report_plots(rep, out);

  const nlohmann::json j = {{"condition", {{"name", model.condition}, {"sigma_x", model.sigma_x}, {"sigma_y", model.sigma_y}}},
                            {"frames", errors.size()},
                            {"mean_error_px", rep.mean_error},
                            {"max_error_px", rep.max_error},
                            {"weighted_mean_error_px", csv_number(rep.weighted_mean_error)},
                            {"diverged", rep.diverged},
                            {"crossed_ci", rep.crossed_ci},
                            {"chi2",
                             {{"statistic", rep.chi2.statistic},
                              {"dof", rep.chi2.dof},
                              {"p_value", rep.chi2.p_value},
                              {"underflow", rep.chi2.underflow},
                              {"rejection_line", stats::chi2_inv(0.99, rep.chi2.dof)}}},
                            {"pp_max_deviation", stats::pp_max_deviation(stats::pp_plot_data(rep.standardized))},
                            {"thresholds", thresholds}};
  write_text(out / "report.json", j.dump(2) + "\n");
  RunManifest manifest{"report",
                       {{"errors", a.errors}, {"condition", a.condition}, {"samples", a.samples}},
                       {"report.csv", "report.json", "thresholds.csv", "pp_plot.csv", "sorted_errors.svg",
                        "cumulative.svg", "pp_plot.svg"},
                       seed};
  manifest.write(out / "run_manifest.json");
  fmt::print("{}", thr);
}

void add_seed(CLI::App* cmd, std::optional<std::uint64_t>& seed) {
  cmd->add_option("--seed", seed, "Seed for every random choice; fresh entropy (echoed in the run manifest) when absent");
}

void add_matcher(CLI::App* cmd, MatcherArgs& m, bool allow_lk) {
  std::vector<std::string> names = {"dfe", "raw"};
  if (allow_lk) names.push_back("lk");
  cmd->add_option("--matcher", m.matcher, "Matcher: dfe (deep feature encodings), raw (pixel SSR)" +
                                              std::string(allow_lk ? ", lk (pyramidal Lucas-Kanade)" : ""))
      ->check(CLI::IsMember(names))
      ->capture_default_str();
  cmd->add_option("--model", m.model, "Trained weights file for the dfe matcher");
}

}  // namespace

void add_commands(CLI::App& app) {
  {
    auto a = std::make_shared<ConvertArgs>();
    auto* c = app.add_subcommand("convert", "Convert an image, or every image of a directory, to CIELAB, LAB01 or gray");
    c->add_option("input", a->input, "Input image file or directory")->required();
    c->add_option("output", a->output, "Output file (or directory for directory input); .png, .ppm or .pgm")->required();
    c->add_option("--to", a->to, "Target representation")->check(CLI::IsMember({"cielab", "lab01", "gray"}))->capture_default_str();
    c->callback([a] { run_convert(*a); });
  }
  {
    auto a = std::make_shared<IngestArgs>();
    auto* c = app.add_subcommand("ingest", "Build a training-crop manifest from a directory of colour images");
    c->add_option("dir", a->dir, "Image directory, walked recursively")->required();
    c->add_option("manifest", a->manifest, "Output manifest CSV")->required();
    c->add_option("--stride", a->stride, "Crop grid stride in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--window", a->window, "Crop side in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--heldout-fraction", a->heldout, "Fraction of crops held out")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    add_seed(c, a->seed);
    c->callback([a] { run_ingest(*a); });
  }
  {
    auto a = std::make_shared<TrainArgs>();
    auto* c = app.add_subcommand("train", "Train the convolutional autoencoder on the crops of a manifest");
    c->add_option("manifest", a->manifest, "Manifest CSV from 'ingest'")->required();
    c->add_option("--root", a->root, "Directory the manifest's image paths are relative to (default: the manifest's directory, as written by ingest)");
    c->add_option("--out", a->out, "Output weights file")->required();
    c->add_option("--config", a->config, "Model configuration JSON (default: desk-scale architecture)");
    c->add_option("--epochs", a->epochs, "Total epochs")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--batch", a->batch, "Mini-batch size")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    c->add_option("--lr", a->learning_rate, "Adamax learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--limit", a->limit, "Use at most this many training crops (0: all)")->capture_default_str();
    c->add_option("--checkpoint", a->checkpoint, "Checkpoint file written during training");
    c->add_option("--checkpoint-every", a->checkpoint_every, "Epochs between checkpoints (0: never)")->capture_default_str();
    c->add_option("--resume", a->resume, "Continue from a checkpoint file");
    add_seed(c, a->seed);
    c->callback([a] { run_train(*a); });
  }
  {
    auto a = std::make_shared<MatchArgs>();
    auto* c = app.add_subcommand("match", "Locate one reference feature in a target frame");
    add_matcher(c, a->m, true);
    c->add_option("--ref-frame", a->ref_frame, "Frame holding the reference feature")->required();
    c->add_option("--ref-x", a->ref_x, "Reference x in pixels")->required();
    c->add_option("--ref-y", a->ref_y, "Reference y in pixels")->required();
    c->add_option("--target", a->target, "Frame to search")->required();
    c->add_option("--emit-landscape", a->landscape_dir, "Write the SSR landscape as CSV and SVG into this directory");
    c->add_option("--out", a->out, "Also write the result JSON to this file");
    c->callback([a] { run_match(*a); });
  }
  {
    auto a = std::make_shared<TrackArgs>();
    auto* c = app.add_subcommand("track", "Track a feature through a directory of frames and report errors against labels");
    c->add_option("frames", a->frames, "Directory of frames, processed in name order")->required();
    c->add_option("--labels", a->labels, "Ground-truth CSV (frame,x,y); enables the error report");
    add_matcher(c, a->m, true);
    c->add_option("--scheme", a->scheme, "fixed: always match frame 0's feature; previous: re-encode each prediction")
        ->check(CLI::IsMember({"fixed", "previous"}))
        ->capture_default_str();
    c->add_option("--ratio-threshold", a->ratio, "Reject frames whose nearest-neighbour ratio exceeds this");
    c->add_flag("--hold-last", a->hold_last, "Score rejected frames at the held prediction instead of the image diagonal");
    c->add_flag("--reencode-held", a->reencode_held, "Previous-frame scheme: re-encode at the held position after a rejection");
    c->add_option("--condition", a->condition, "Labelling-error condition for the report")->capture_default_str();
    c->add_option("--error-models", a->models, "Error-model catalog JSON (default: built-in conditions)");
    c->add_option("--start-x", a->start_x, "Start x (default: first label)");
    c->add_option("--start-y", a->start_y, "Start y (default: first label)");
    c->add_option("--take-every", a->take_every, "Use every k-th frame")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--samples", a->samples, "Monte-Carlo samples of the distance distribution")->capture_default_str();
    c->add_flag("--emit-landscapes", a->landscapes, "Write every frame's SSR landscape (descriptor matchers)");
    c->add_option("--out", a->out, "Output directory")->required();
    add_seed(c, a->seed);
    c->callback([a] { run_track(*a); });
  }
  {
    auto a = std::make_shared<CalibrateArgs>();
    auto* c = app.add_subcommand("calibrate", "Estimate labelling-error sigmas from repeated labelling attempts");
    c->add_option("relabels", a->relabels, "Relabels CSV (image_id,attempt,x,y)")->required();
    c->add_option("--condition", a->condition, "Condition name")->required();
    c->add_option("--out", a->out, "Error-model catalog JSON to create or update");
    c->callback([a] { run_calibrate(*a); });
  }
  {
    auto a = std::make_shared<SynthArgs>();
    auto* c = app.add_subcommand("synth", "Render a synthetic sequence with ground-truth labels from a JSON spec");
    c->add_option("spec", a->spec, "Sequence spec JSON")->required();
    c->add_option("out", a->out, "Output directory")->required();
    add_seed(c, a->seed);
    c->callback([a] { run_synth(*a); });
  }
  {
    auto a = std::make_shared<ReportArgs>();
    auto* c = app.add_subcommand("report", "Chi-square report, thresholds and plots for a list of frame errors");
    c->add_option("errors", a->errors, "Errors CSV (frame,dx,dy)")->required();
    c->add_option("--condition", a->condition, "Labelling-error condition")->capture_default_str();
    c->add_option("--error-models", a->models, "Error-model catalog JSON (default: built-in conditions)");
    c->add_option("--samples", a->samples, "Monte-Carlo samples of the distance distribution")->capture_default_str();
    c->add_option("--diagonal", a->diagonal, "Image diagonal; errors of this size mark divergence");
    c->add_option("--out", a->out, "Output directory")->required();
    add_seed(c, a->seed);
    c->callback([a] { run_report(*a); });
  }
}

}  // namespace dfetrack::cli
