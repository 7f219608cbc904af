#include "dfetrack/flow_lk.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "dfetrack/error.hpp"

namespace dfetrack::lk {
namespace {

constexpr double kSingularRelTol = 1e-12;
constexpr double kZeroEigen = 1e-15;

void require_gray(const PlanarImage& img, const char* what) {
  if (img.channels() != 1) {
    throw InvalidInput(std::string(what) + ": Lucas-Kanade operates on single-channel images");
  }
}

bool is_singular(const StructureTensor& t) {
  const double tr = t.trace();
  return t.determinant() <= kSingularRelTol * tr * tr;
}

}  // namespace

std::string_view to_string(FlowStatus status) {
  switch (status) {
    case FlowStatus::Converged: return "converged";
    case FlowStatus::MaxIterations: return "max-iterations";
    case FlowStatus::Singular: return "singular";
    case FlowStatus::OutOfBounds: return "out-of-bounds";
  }
  return "unknown";
}

void FlowWindow::validate() const {
  if (size < 3) throw InvalidInput("flow window must be at least 3 px");
  if (max_level < 0 || max_level > kMaxPyramidLevel) {
    throw InvalidInput("flow window max level must lie in [0, 4]");
  }
  if (max_iterations < 1) throw InvalidInput("flow window needs at least one iteration");
  if (!(epsilon > 0.0)) throw InvalidInput("flow window epsilon must be positive");
}

Gradient gradient_at(const PlanarImage& img, Point2d p) {
  if (!img.contains(p, 1.0)) {
    std::ostringstream msg;
    msg << "gradient_at: " << p << " is within one pixel of the border";
    throw BorderError(msg.str());
  }
  return {0.5 * (sample_bilinear(img, p.x + 1, p.y) - sample_bilinear(img, p.x - 1, p.y)),
          0.5 * (sample_bilinear(img, p.x, p.y + 1) - sample_bilinear(img, p.x, p.y - 1))};
}

GradientField spatial_gradients(const PlanarImage& img, const Region& region) {
  require_gray(img, "spatial_gradients");
  if (region.width < 1 || region.height < 1 || region.x < 1 || region.y < 1 ||
      region.x + region.width > img.width() - 1 || region.y + region.height > img.height() - 1) {
    throw BorderError("spatial_gradients: region must be interior by at least one pixel");
  }
  GradientField field{region, {}, {}};
  field.ix.reserve(static_cast<std::size_t>(region.width) * region.height);
  field.iy.reserve(field.ix.capacity());
  for (int y = region.y; y < region.y + region.height; ++y) {
    for (int x = region.x; x < region.x + region.width; ++x) {
      field.ix.push_back(0.5 * (img.at(x + 1, y) - img.at(x - 1, y)));
      field.iy.push_back(0.5 * (img.at(x, y + 1) - img.at(x, y - 1)));
    }
  }
  return field;
}

double eigen_ratio(const StructureTensor& t) {
  const double mean = 0.5 * (t.sxx + t.syy);
  const double half_diff = 0.5 * (t.sxx - t.syy);
  const double radius = std::sqrt(half_diff * half_diff + t.sxy * t.sxy);
  const double lambda1 = mean + radius;
  const double lambda2 = mean - radius;
  if (lambda2 <= kZeroEigen) return std::numeric_limits<double>::infinity();
  return lambda1 / lambda2;
}

FlowResult lk_step(const PlanarImage& ref, const PlanarImage& cur, Point2d p, Point2d guess,
                   const FlowWindow& win) {
  win.validate();
  require_gray(ref, "lk_step");
  require_gray(cur, "lk_step");

  FlowResult result;
  result.position = guess;
  result.displacement = guess - p;

  const double half = win.half_extent();
  if (!ref.contains(p, half + 1.0) || !cur.contains(guess, half)) {
    result.status = FlowStatus::OutOfBounds;
    return result;
  }

  // Reference window samples and gradients, computed once.
  const int n = win.size * win.size;
  std::vector<double> ref_values(n), gx(n), gy(n);
  StructureTensor tensor;
  for (int j = 0; j < win.size; ++j) {
    for (int i = 0; i < win.size; ++i) {
      const Point2d q{p.x - half + i, p.y - half + j};
      const int k = j * win.size + i;
      ref_values[k] = sample_bilinear(ref, q.x, q.y);
      const Gradient g = gradient_at(ref, q);
      gx[k] = g.ix;
      gy[k] = g.iy;
      tensor.sxx += g.ix * g.ix;
      tensor.sxy += g.ix * g.iy;
      tensor.syy += g.iy * g.iy;
    }
  }
  result.eigen_ratio = eigen_ratio(tensor);
  if (is_singular(tensor)) {
    result.status = FlowStatus::Singular;
    return result;
  }
  const double det = tensor.determinant();

  Point2d v = guess;
  result.status = FlowStatus::MaxIterations;
  for (int iter = 0; iter < win.max_iterations; ++iter) {
    double bx = 0.0, by = 0.0;
    for (int j = 0; j < win.size; ++j) {
      for (int i = 0; i < win.size; ++i) {
        const int k = j * win.size + i;
        const double it = sample_bilinear(cur, v.x - half + i, v.y - half + j) - ref_values[k];
        bx += gx[k] * it;
        by += gy[k] * it;
      }
    }
    // increment = G^-1 * sum(grad * -I_t)
    const Point2d increment{-(tensor.syy * bx - tensor.sxy * by) / det,
                            -(tensor.sxx * by - tensor.sxy * bx) / det};
    const Point2d next = v + increment;
    result.iterations = iter + 1;
    result.increments.push_back(increment.norm());
    if (!cur.contains(next, half)) {
      result.status = FlowStatus::OutOfBounds;
      break;
    }
    v = next;
    if (increment.norm() < win.epsilon) {
      result.status = FlowStatus::Converged;
      break;
    }
  }
  result.position = v;
  result.displacement = v - p;
  return result;
}

FlowResult lk_pyramidal(const ImagePyramid& ref, const ImagePyramid& cur, Point2d p,
                        const FlowWindow& win, Point2d initial_guess) {
  win.validate();
  if (ref.max_level() < win.max_level || cur.max_level() < win.max_level) {
    throw InvalidInput("lk_pyramidal: pyramids are shallower than the window's max level");
  }
  int top = win.max_level;
  while (top > 0 && !ref.levels[top].contains(pyramid_coords(p, top), win.half_extent() + 1.0)) --top;
  const double top_scale = static_cast<double>(1 << top);
  Point2d guess = (1.0 / top_scale) * (initial_guess - p);  // displacement at the level

  FlowResult result;
  for (int level = top; level >= 0; --level) {
    const double scale = static_cast<double>(1 << level);
    const Point2d p_level = pyramid_coords(p, level);
    FlowResult step = lk_step(ref.levels[level], cur.levels[level], p_level, p_level + guess, win);
    if (step.status == FlowStatus::Singular || step.status == FlowStatus::OutOfBounds) {
      const Point2d last_valid = p + scale * (step.position - p_level);
      step.level_estimates = std::move(result.level_estimates);
      step.position = last_valid;
      step.start_level = top;
      step.displacement = last_valid - p;
      return step;
    }
    step.level_estimates = std::move(result.level_estimates);
    step.level_estimates.push_back(step.position);
    step.start_level = top;
    result = std::move(step);
    if (level > 0) guess = 2.0 * (result.position - p_level);
  }
  result.displacement = result.position - p;
  return result;
}

FlowResult lk_pyramidal(const PlanarImage& ref, const PlanarImage& cur, Point2d p,
                        const FlowWindow& win, Point2d initial_guess) {
  win.validate();
  const ImagePyramid ref_pyr = build_pyramid(ref, win.max_level, win.size);
  const ImagePyramid cur_pyr = build_pyramid(cur, win.max_level, win.size);
  return lk_pyramidal(ref_pyr, cur_pyr, p, win, initial_guess);
}

FlowResult lk_pyramidal(const PlanarImage& ref, const PlanarImage& cur, Point2d p,
                        const FlowWindow& win) {
  return lk_pyramidal(ref, cur, p, win, p);
}

}  // namespace dfetrack::lk
