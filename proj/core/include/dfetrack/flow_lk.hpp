#pragma once

#include <string_view>
#include <vector>

#include "dfetrack/geometry.hpp"
#include "dfetrack/raster.hpp"

namespace dfetrack::lk {

// m x m observation window plus iteration controls. Defaults mirror the
// classic pyramidal tracker setup: 10x10 window, 5 levels, 10 iterations
// or a 0.03 px increment, whichever comes first.
struct FlowWindow {
  int size = 10;
  int max_level = 4;
  int max_iterations = 10;
  double epsilon = 0.03;

  void validate() const;
  // Half extent of the window; samples sit at offsets -h, -h+1, ..., h.
  double half_extent() const { return 0.5 * (size - 1); }
};

struct StructureTensor {
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;

  double determinant() const { return sxx * syy - sxy * sxy; }
  double trace() const { return sxx + syy; }
};

enum class FlowStatus { Converged, MaxIterations, Singular, OutOfBounds };
std::string_view to_string(FlowStatus status);

struct FlowResult {
  Point2d position;       // v, the matched position in the current image
  Point2d displacement;   // d = v - p
  FlowStatus status = FlowStatus::Converged;
  double eigen_ratio = 1.0;
  int iterations = 0;
  int start_level = 0;                    // deepest level actually solved
  std::vector<double> increments;         // |increment| per iteration (last level)
  std::vector<Point2d> level_estimates;   // v^L per level, deepest first
};

struct Gradient {
  double ix = 0.0;
  double iy = 0.0;
};

// Integer region [x, x+width) x [y, y+height).
struct Region {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct GradientField {
  Region region;
  std::vector<double> ix;  // row-major over the region
  std::vector<double> iy;
};

// Central difference at a (possibly fractional) position, bilinear sampling.
// Requires p to be at least one pixel inside the border.
Gradient gradient_at(const PlanarImage& img, Point2d p);

// Central differences over an integer region. Throws BorderError when the
// region comes closer than one pixel to the border.
GradientField spatial_gradients(const PlanarImage& img, const Region& region);

// lambda_max / lambda_min of the 2x2 tensor; +infinity when lambda_min <= 1e-15.
double eigen_ratio(const StructureTensor& t);

// Iterative single-level solve. `guess` is the starting position in `cur`.
FlowResult lk_step(const PlanarImage& ref, const PlanarImage& cur, Point2d p, Point2d guess,
                   const FlowWindow& win);

// Coarse-to-fine tracking over pre-built pyramids. Starts at the deepest
// level (up to win.max_level) whose image still holds the window around p.
FlowResult lk_pyramidal(const ImagePyramid& ref, const ImagePyramid& cur, Point2d p,
                        const FlowWindow& win, Point2d initial_guess);

// Builds win.max_level-deep pyramids of two single-channel images.
FlowResult lk_pyramidal(const PlanarImage& ref, const PlanarImage& cur, Point2d p,
                        const FlowWindow& win);
FlowResult lk_pyramidal(const PlanarImage& ref, const PlanarImage& cur, Point2d p,
                        const FlowWindow& win, Point2d initial_guess);

}  // namespace dfetrack::lk
