#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dfetrack::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
  bool markers = false;  // dots instead of a polyline
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  int width = 640;
  int height = 420;
};

// Standalone SVG document; non-finite points are skipped.
std::string render(const Plot& plot);

// Grayscale heat map of an nx x ny row-major grid, dark = small.
std::string heatmap(const std::vector<double>& values, int nx, int ny, const std::string& title);

void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dfetrack::svg
