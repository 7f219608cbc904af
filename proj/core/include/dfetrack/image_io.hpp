#pragma once

#include <filesystem>
#include <vector>

#include "dfetrack/raster.hpp"

namespace dfetrack {

// Reads PNG or binary PPM/PGM. Three-channel files load as RGB01, single
// channel as GRAY01; alpha is dropped. Samples are divided by the format's
// maximum value (255 for 8-bit).
PlanarImage read_image(const std::filesystem::path& path);

// Writes 8-bit PNG (.png), PPM (.ppm) or PGM (.pgm). CIELAB images are
// min-max normalised first so every space maps onto [0, 255].
void write_image(const std::filesystem::path& path, const PlanarImage& img);

bool is_image_file(const std::filesystem::path& path);

// Image files inside `dir` (and its subdirectories when `recursive`), sorted
// by path.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir, bool recursive = false);

}  // namespace dfetrack
