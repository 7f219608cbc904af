#pragma once

#include <cmath>
#include <ostream>

namespace dfetrack {

// Image coordinates: x is the column index (rightward), y the row index
// (downward), origin at the centre of the top-left pixel.
struct Point2d {
  double x = 0.0;
  double y = 0.0;

  friend Point2d operator+(Point2d a, Point2d b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2d operator-(Point2d a, Point2d b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2d operator*(double s, Point2d a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point2d, Point2d) = default;

  double norm() const { return std::hypot(x, y); }
};

struct Pixel {
  int x = 0;
  int y = 0;

  friend bool operator==(Pixel, Pixel) = default;
  Point2d to_point() const { return {static_cast<double>(x), static_cast<double>(y)}; }
};

inline Pixel round_to_pixel(Point2d p) {
  return {static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y))};
}

inline double distance(Point2d a, Point2d b) { return (a - b).norm(); }

inline std::ostream& operator<<(std::ostream& os, Point2d p) {
  return os << '(' << p.x << ", " << p.y << ')';
}
inline std::ostream& operator<<(std::ostream& os, Pixel p) {
  return os << '(' << p.x << ", " << p.y << ')';
}

}  // namespace dfetrack
