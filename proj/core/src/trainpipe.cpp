#include "dfetrack/trainpipe.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "dfetrack/error.hpp"
#include "dfetrack/image_io.hpp"
#include "dfetrack/matchcore.hpp"
#include "dfetrack/parallel.hpp"
#include "dfetrack/rng.hpp"

namespace dfetrack::trainpipe {
namespace fs = std::filesystem;

namespace {

void emit(const WarningSink& warn, const std::string& msg) {
  if (warn) {
    warn(msg);
  } else {
    std::cerr << "warning: " << msg << '\n';
  }
}

}  // namespace

const char* to_string(Split s) { return s == Split::Train ? "train" : "heldout"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "heldout") return Split::Heldout;
  throw InvalidInput("unknown split tag '" + s + "'");
}

std::size_t CropManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const ManifestEntry& e) { return e.split == s; }));
}

std::vector<Pixel> extract_training_crops(const PlanarImage& img, int window, int stride,
                                          const WarningSink& warn) {
  if (window < 1 || window % 2 == 0) throw InvalidInput("crop window must be odd and positive");
  if (stride < 1) throw InvalidInput("crop stride must be positive");
  if (img.width() < window || img.height() < window) {
    emit(warn, fmt::format("{}x{} image is smaller than the {}x{} crop window; skipped", img.width(),
                           img.height(), window, window));
    return {};
  }
  return match::position_grid(img.width(), img.height(), window, stride).centers();
}

std::uint64_t entry_hash(const ManifestEntry& e, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : e.image) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.center.x)));
  h = hash_combine(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.center.y)));
  return hash_combine(h, seed);
}

void assign_splits(CropManifest& manifest, double heldout_fraction) {
  if (!(heldout_fraction >= 0.0 && heldout_fraction <= 1.0)) {
    throw InvalidInput("held-out fraction must lie in [0, 1]");
  }
  auto& entries = manifest.entries;
  std::vector<std::pair<std::uint64_t, std::size_t>> keys(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) keys[i] = {entry_hash(entries[i], manifest.seed), i};
  std::sort(keys.begin(), keys.end());
  const auto held = static_cast<std::size_t>(std::llround(heldout_fraction * static_cast<double>(entries.size())));
  for (std::size_t r = 0; r < keys.size(); ++r) {
    entries[keys[r].second].split = r < held ? Split::Heldout : Split::Train;
  }
}

IngestResult build_manifest(const fs::path& root, std::uint64_t seed, double heldout_fraction, int window,
                            int stride, const WarningSink& warn) {
  const auto files = list_images(root, true);
  struct PerFile {
    std::vector<Pixel> centers;
    std::string error;
    std::vector<std::string> warnings;
  };
  std::vector<PerFile> results(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    auto& r = results[i];
    try {
      const PlanarImage img = read_image(files[i]);
      if (img.channels() != 3) {
        r.error = "grayscale image; training uses three-channel crops";
        return;
      }
      r.centers = extract_training_crops(img, window, stride,
                                         [&](const std::string& m) { r.warnings.push_back(m); });
    } catch (const Error& e) {
      r.error = e.what();
    }
  });

  IngestResult out;
  out.manifest.seed = seed;
  std::set<std::pair<std::string, std::pair<int, int>>> seen;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& r = results[i];
    for (const auto& w : r.warnings) emit(warn, files[i].string() + ": " + w);
    if (!r.error.empty()) {
      out.skipped.push_back({files[i], r.error});
      continue;
    }
    if (r.centers.empty()) {
      out.skipped.push_back({files[i], "smaller than the crop window"});
      continue;
    }
    const std::string id = fs::relative(files[i], root).generic_string();
    for (const auto& c : r.centers) {
      if (seen.insert({id, {c.x, c.y}}).second) out.manifest.entries.push_back({id, c, Split::Train});
    }
  }
  assign_splits(out.manifest, heldout_fraction);
  return out;
}

void write_manifest_csv(const CropManifest& manifest, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "image_path,cx,cy,split\n";
  for (const auto& e : manifest.entries) {
    if (e.image.find_first_of(",\n\"") != std::string::npos) {
      throw InvalidInput("image id cannot be stored in CSV: " + e.image);
    }
    f << e.image << ',' << e.center.x << ',' << e.center.y << ',' << to_string(e.split) << '\n';
  }
  if (!f) throw IoError("failed writing " + path.string());
}

CropManifest read_manifest_csv(const fs::path& path, std::uint64_t seed) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "image_path,cx,cy,split") {
    throw FormatError(path.string() + ": missing manifest header");
  }
  CropManifest m;
  m.seed = seed;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string image, cx, cy, split;
    if (!std::getline(ss, image, ',') || !std::getline(ss, cx, ',') || !std::getline(ss, cy, ',') ||
        !std::getline(ss, split)) {
      throw FormatError(fmt::format("{}:{}: expected four fields", path.string(), lineno));
    }
    try {
      m.entries.push_back({image, {std::stoi(cx), std::stoi(cy)}, parse_split(split)});
    } catch (const std::logic_error&) {
      throw FormatError(fmt::format("{}:{}: malformed entry '{}'", path.string(), lineno, line));
    }
  }
  return m;
}

std::vector<PlanarImage> load_crops(const CropManifest& manifest, Split split, const fs::path& root,
                                    int window) {
  std::vector<const ManifestEntry*> picked;
  for (const auto& e : manifest.entries) {
    if (e.split == split) picked.push_back(&e);
  }
  // Decode each distinct image once.
  std::vector<std::string> ids;
  for (const auto* e : picked) ids.push_back(e->image);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<PlanarImage> images(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { images[i] = to_lab01(read_image(root / ids[i])); });

  std::vector<PlanarImage> crops(picked.size());
  parallel_for(picked.size(), [&](std::size_t i) {
    const auto it = std::lower_bound(ids.begin(), ids.end(), picked[i]->image);
    crops[i] = extract_crop(images[static_cast<std::size_t>(it - ids.begin())], picked[i]->center, window).image;
  });
  return crops;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(hash_combine(seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
  if (batch_size < 2) throw InvalidInput("batch size must be at least 2");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    if (end - i < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace dfetrack::trainpipe
