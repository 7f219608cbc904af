#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dfetrack/geometry.hpp"
#include "dfetrack/raster.hpp"

namespace dfetrack::trainpipe {

inline constexpr int kTrainingWindow = 31;
inline constexpr int kTrainingStride = 30;

enum class Split { Train, Heldout };
const char* to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string image;  // path relative to the ingested root, '/' separated
  Pixel center;
  Split split = Split::Train;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct CropManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;

  std::size_t count(Split s) const;
};

using WarningSink = std::function<void(const std::string&)>;

// Crop centres of an inclusive stride grid. Images smaller than the window
// produce no centres and a warning through `warn` (stderr when empty).
std::vector<Pixel> extract_training_crops(const PlanarImage& img, int window = kTrainingWindow,
                                          int stride = kTrainingStride, const WarningSink& warn = {});

// Stable 64-bit key of an entry: FNV-1a over the image id, mixed with the
// centre and the seed.
std::uint64_t entry_hash(const ManifestEntry& e, std::uint64_t seed);

// Ranks entries by entry_hash and marks the first round(f * N) as held out.
void assign_splits(CropManifest& manifest, double heldout_fraction);

struct SkippedFile {
  std::filesystem::path path;
  std::string reason;
};

struct IngestResult {
  CropManifest manifest;
  std::vector<SkippedFile> skipped;
};

// Walks `root` recursively. Unreadable or grayscale files land in the skip
// report; entries keep file order, then row-major centre order.
IngestResult build_manifest(const std::filesystem::path& root, std::uint64_t seed, double heldout_fraction,
                            int window = kTrainingWindow, int stride = kTrainingStride,
                            const WarningSink& warn = {});

void write_manifest_csv(const CropManifest& manifest, const std::filesystem::path& path);
CropManifest read_manifest_csv(const std::filesystem::path& path, std::uint64_t seed = 0);

// LAB01 crops of one split, in manifest order. Image ids resolve against
// `root`.
std::vector<PlanarImage> load_crops(const CropManifest& manifest, Split split,
                                    const std::filesystem::path& root, int window = kTrainingWindow);

// Permutation of [0, n) for one epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Consecutive slices of `order`. A trailing slice shorter than two is
// dropped since batch normalisation cannot train on it.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size);

}  // namespace dfetrack::trainpipe
