#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dfetrack/geometry.hpp"

namespace dfetrack::match {

inline constexpr int kDescriptorDim = 128;
inline constexpr int kMatchWindow = 31;

// Fixed-length real feature vector. Reference and candidate descriptors in
// one landscape must share the same dimensionality.
struct Descriptor {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::span<const double> view() const { return values; }
  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

// Sum of squared residuals, accumulated in index order.
double ssr(std::span<const double> a, std::span<const double> b);
inline double ssr(const Descriptor& a, const Descriptor& b) { return ssr(a.view(), b.view()); }

// Every centre at which a window x window crop fits inside a w x h image,
// stepping by `stride`, including the trailing position.
struct PositionGrid {
  int image_width = 0;
  int image_height = 0;
  int window = kMatchWindow;
  int stride = 1;
  int nx = 0;  // centres per row
  int ny = 0;  // centres per column

  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  Pixel center(int i, int j) const {
    return {window / 2 + i * stride, window / 2 + j * stride};
  }
  Pixel center(std::size_t index) const {
    return center(static_cast<int>(index % nx), static_cast<int>(index / nx));
  }
  std::vector<Pixel> centers() const;
};

PositionGrid position_grid(int width, int height, int window = kMatchWindow, int stride = 1);

// SSR against a reference descriptor at every grid centre, row-major.
struct SsrLandscape {
  PositionGrid grid;
  std::vector<double> ssr;

  double at(int i, int j) const { return ssr[static_cast<std::size_t>(j) * grid.nx + i]; }
  bool empty() const { return ssr.empty(); }
};

SsrLandscape ssr_landscape(const Descriptor& ref, std::span<const Descriptor> candidates,
                           const PositionGrid& grid);

// z = c6*y^2 + c5*x^2 + c4*x*y + c3*y + c2*x + c1 in coordinates centred on
// the middle of a 3x3 neighbourhood. coeffs[0] holds c1, coeffs[5] holds c6.
struct SurfaceFit {
  std::array<double, 6> coeffs{};

  double c(int k) const { return coeffs[k - 1]; }  // 1-based, matching the formula
  double zxx() const { return 2.0 * c(5); }
  double zyy() const { return 2.0 * c(6); }
  double zxy() const { return c(4); }
  // Hessian determinant D = zxx*zyy - zxy^2 = 4*c5*c6 - c4^2.
  double curvature() const { return zxx() * zyy() - zxy() * zxy(); }
};

// Least-squares fit to nine samples ordered row by row, (x, y) from (-1, -1)
// to (1, 1).
SurfaceFit fit_quadratic_surface(std::span<const double, 9> z);

// Fit around grid coordinate (i, j); throws BorderError when the 3x3
// neighbourhood leaves the landscape.
SurfaceFit fit_quadratic_surface(const SsrLandscape& land, int i, int j);

enum class CriticalPoint { LocalMin, LocalMax, Saddle, Degenerate };
std::string_view to_string(CriticalPoint kind);

inline constexpr double kDegenerateCurvature = 1e-12;

CriticalPoint classify_critical(const SurfaceFit& fit);

// Zero-gradient point of a fit classified as a local minimum, as an offset
// from the neighbourhood centre. Throws PreconditionError otherwise.
Point2d subpixel_minimum(const SurfaceFit& fit);

enum class MatchStatus {
  Accepted,
  NoLocalMinimum,         // curvature filter rejected every centre
  RefinementOutsideCell,  // refined minimum fell outside the 3x3 cell
};
std::string_view to_string(MatchStatus status);

struct MatchResult {
  Pixel pixel_pos;
  Point2d subpixel_pos;
  double ssr_min = 0.0;
  double curvature = 0.0;
  double nn_ratio = 1.0;
  bool accepted = false;
  MatchStatus status = MatchStatus::NoLocalMinimum;
};

// Walks unique SSR values upwards; within the first value that has any
// local-minimum fit, picks the centre of largest curvature and refines it.
// Falls back to the global-minimum pixel (accepted = false) when the whole
// landscape yields no local minimum. A minimum of exactly zero is returned
// at its pixel without refinement.
MatchResult match_feature(const SsrLandscape& land);

// Descriptor-distance ratio sqrt(ssr1) / sqrt(ssr2) of the two smallest
// landscape values; 1 when both are zero.
double nn_ratio(const SsrLandscape& land);

// Image diagonal, the error charged to frames where no match is emitted.
double unmatched_error(double width, double height);

}  // namespace dfetrack::match
