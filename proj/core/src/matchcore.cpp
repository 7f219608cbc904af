#include "dfetrack/matchcore.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "dfetrack/error.hpp"

namespace dfetrack::match {
namespace {

// (A^T A)^-1 A^T for A rows [1, x, y, xy, x^2, y^2] over the centred 3x3
// lattice. Computed once through the normal equations.
const Eigen::Matrix<double, 6, 9>& surface_projector() {
  static const Eigen::Matrix<double, 6, 9> projector = [] {
    Eigen::Matrix<double, 9, 6> a;
    for (int k = 0; k < 9; ++k) {
      const double x = k % 3 - 1;
      const double y = k / 3 - 1;
      a.row(k) << 1.0, x, y, x * y, x * x, y * y;
    }
    const Eigen::Matrix<double, 6, 6> normal = a.transpose() * a;
    return Eigen::Matrix<double, 6, 9>(normal.ldlt().solve(a.transpose()));
  }();
  return projector;
}

}  // namespace

double ssr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInput("ssr: descriptor dimensions differ (" + std::to_string(a.size()) +
                       " vs " + std::to_string(b.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

std::vector<Pixel> PositionGrid::centers() const {
  std::vector<Pixel> out;
  out.reserve(size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) out.push_back(center(i, j));
  }
  return out;
}

PositionGrid position_grid(int width, int height, int window, int stride) {
  if (window < 1 || window % 2 == 0) throw InvalidInput("position_grid: window must be odd");
  if (stride < 1) throw InvalidInput("position_grid: stride must be positive");
  if (width < window || height < window) {
    std::ostringstream msg;
    msg << "position_grid: " << width << "x" << height << " image is smaller than the "
        << window << " px window";
    throw InvalidInput(msg.str());
  }
  PositionGrid grid;
  grid.image_width = width;
  grid.image_height = height;
  grid.window = window;
  grid.stride = stride;
  grid.nx = (width - window) / stride + 1;
  grid.ny = (height - window) / stride + 1;
  return grid;
}

SsrLandscape ssr_landscape(const Descriptor& ref, std::span<const Descriptor> candidates,
                           const PositionGrid& grid) {
  if (candidates.size() != grid.size()) {
    throw InvalidInput("ssr_landscape: " + std::to_string(candidates.size()) +
                       " candidates for a grid of " + std::to_string(grid.size()) + " centres");
  }
  SsrLandscape land{grid, std::vector<double>(candidates.size())};
  for (std::size_t k = 0; k < candidates.size(); ++k) land.ssr[k] = ssr(ref, candidates[k]);
  return land;
}

SurfaceFit fit_quadratic_surface(std::span<const double, 9> z) {
  const Eigen::Map<const Eigen::Matrix<double, 9, 1>> values(z.data());
  SurfaceFit fit;
  Eigen::Map<Eigen::Matrix<double, 6, 1>>(fit.coeffs.data()) = surface_projector() * values;
  return fit;
}

SurfaceFit fit_quadratic_surface(const SsrLandscape& land, int i, int j) {
  if (i < 1 || j < 1 || i > land.grid.nx - 2 || j > land.grid.ny - 2) {
    std::ostringstream msg;
    msg << "fit_quadratic_surface: grid coordinate (" << i << ", " << j
        << ") has no full 3x3 neighbourhood in a " << land.grid.nx << "x" << land.grid.ny
        << " landscape";
    throw BorderError(msg.str());
  }
  std::array<double, 9> z;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) z[(dy + 1) * 3 + dx + 1] = land.at(i + dx, j + dy);
  }
  return fit_quadratic_surface(std::span<const double, 9>(z));
}

std::string_view to_string(CriticalPoint kind) {
  switch (kind) {
    case CriticalPoint::LocalMin: return "local-min";
    case CriticalPoint::LocalMax: return "local-max";
    case CriticalPoint::Saddle: return "saddle";
    case CriticalPoint::Degenerate: return "degenerate";
  }
  return "unknown";
}

std::string_view to_string(MatchStatus status) {
  switch (status) {
    case MatchStatus::Accepted: return "accepted";
    case MatchStatus::NoLocalMinimum: return "no-local-minimum";
    case MatchStatus::RefinementOutsideCell: return "refinement-outside-cell";
  }
  return "unknown";
}

CriticalPoint classify_critical(const SurfaceFit& fit) {
  const double d = fit.curvature();
  if (std::abs(d) <= kDegenerateCurvature) return CriticalPoint::Degenerate;
  if (d < 0.0) return CriticalPoint::Saddle;
  return fit.zxx() > 0.0 ? CriticalPoint::LocalMin : CriticalPoint::LocalMax;
}

Point2d subpixel_minimum(const SurfaceFit& fit) {
  const CriticalPoint kind = classify_critical(fit);
  if (kind != CriticalPoint::LocalMin) {
    throw PreconditionError("subpixel_minimum: fitted surface is a " +
                            std::string(to_string(kind)) + ", not a local minimum");
  }
  const double denom = 4.0 * fit.c(5) * fit.c(6) - fit.c(4) * fit.c(4);
  return {(fit.c(3) * fit.c(4) - 2.0 * fit.c(2) * fit.c(6)) / denom,
          (fit.c(2) * fit.c(4) - 2.0 * fit.c(3) * fit.c(5)) / denom};
}

MatchResult match_feature(const SsrLandscape& land) {
  if (land.empty()) throw InvalidInput("match_feature: empty landscape");
  const PositionGrid& grid = land.grid;

  std::vector<std::size_t> order(land.ssr.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return land.ssr[a] < land.ssr[b]; });

  MatchResult result;
  result.nn_ratio = land.ssr.size() >= 2 ? nn_ratio(land) : 1.0;

  std::size_t best = order.size();
  SurfaceFit best_fit;
  double best_curvature = -std::numeric_limits<double>::infinity();
  for (std::size_t begin = 0; begin < order.size();) {
    const double value = land.ssr[order[begin]];
    std::size_t end = begin;
    while (end < order.size() && land.ssr[order[end]] == value) ++end;
    for (std::size_t k = begin; k < end; ++k) {
      const int i = static_cast<int>(order[k] % grid.nx);
      const int j = static_cast<int>(order[k] / grid.nx);
      if (i < 1 || j < 1 || i > grid.nx - 2 || j > grid.ny - 2) continue;
      const SurfaceFit fit = fit_quadratic_surface(land, i, j);
      if (classify_critical(fit) != CriticalPoint::LocalMin) continue;
      if (fit.curvature() > best_curvature) {
        best_curvature = fit.curvature();
        best = order[k];
        best_fit = fit;
      }
    }
    if (best != order.size()) break;
    begin = end;
  }

  if (best == order.size()) {
    result.pixel_pos = grid.center(order.front());
    result.subpixel_pos = result.pixel_pos.to_point();
    result.ssr_min = land.ssr[order.front()];
    result.curvature = 0.0;
    result.accepted = false;
    result.status = MatchStatus::NoLocalMinimum;
    return result;
  }

  result.pixel_pos = grid.center(best);
  result.ssr_min = land.ssr[best];
  result.curvature = best_curvature;
  // A zero residual is an exact pixel-level match; a sub-pixel shift could
  // only make it worse, so the fit is not consulted.
  if (result.ssr_min == 0.0) {
    result.subpixel_pos = result.pixel_pos.to_point();
    result.accepted = true;
    result.status = MatchStatus::Accepted;
    return result;
  }
  const Point2d offset = subpixel_minimum(best_fit);
  if (std::abs(offset.x) > 1.0 || std::abs(offset.y) > 1.0) {
    result.subpixel_pos = result.pixel_pos.to_point();
    result.accepted = false;
    result.status = MatchStatus::RefinementOutsideCell;
    return result;
  }
  result.subpixel_pos = result.pixel_pos.to_point() + static_cast<double>(grid.stride) * offset;
  result.accepted = true;
  result.status = MatchStatus::Accepted;
  return result;
}

double nn_ratio(const SsrLandscape& land) {
  if (land.ssr.size() < 2) throw InvalidInput("nn_ratio: need at least two centres");
  double first = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  for (double v : land.ssr) {
    if (v < first) {
      second = first;
      first = v;
    } else if (v < second) {
      second = v;
    }
  }
  if (second <= 0.0) return 1.0;
  return std::sqrt(first) / std::sqrt(second);
}

double unmatched_error(double width, double height) { return std::hypot(width, height); }

}  // namespace dfetrack::match
