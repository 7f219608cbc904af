#include "dfetrack/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dfetrack/error.hpp"

namespace dfetrack::svg {
namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo <= 0.0) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

}  // namespace

std::string render(const Plot& plot) {
  constexpr double left = 70.0, right = 20.0, top = 40.0, bottom = 55.0;
  const double pw = plot.width - left - right;
  const double ph = plot.height - top - bottom;
  Range rx, ry;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        rx.add(s.x[i]);
        ry.add(s.y[i]);
      }
    }
  }
  rx.settle();
  ry.settle();
  auto sx = [&](double x) { return left + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto sy = [&](double y) { return top + ph - (y - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      plot.width, plot.height);
  out += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     plot.width / 2, escape(plot.title));
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left,
                     top, pw, ph);
  for (int t = 0; t <= 4; ++t) {
    const double fx = rx.lo + (rx.hi - rx.lo) * t / 4.0;
    const double fy = ry.lo + (ry.hi - ry.lo) * t / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n", sx(fx),
                       top + ph + 16, fx);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", left - 6, sy(fy) + 4,
                       fy);
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2,
                     plot.height - 12, escape(plot.x_label));
  out += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
      top + ph / 2, top + ph / 2, escape(plot.y_label));

  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.markers) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"{}\"/>\n", sx(s.x[i]), sy(s.y[i]),
                           s.color);
      }
    } else {
      std::string pts;
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        pts += fmt::format("{:.2f},{:.2f} ", sx(s.x[i]), sy(s.y[i]));
      }
      out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n", s.color,
                         s.dashed ? " stroke-dasharray=\"6 4\"" : "", pts);
    }
    const double ly = top + 14 + 16.0 * static_cast<double>(k);
    out += fmt::format(
        "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"{3}\"{4}/>"
        "<text x=\"{5:.1f}\" y=\"{6:.1f}\">{7}</text>\n",
        left + 10, ly, left + 30, s.color, s.dashed ? " stroke-dasharray=\"6 4\"" : "", left + 36, ly + 4,
        escape(s.label));
  }
  out += "</svg>\n";
  return out;
}

std::string heatmap(const std::vector<double>& values, int nx, int ny, const std::string& title) {
  if (nx < 1 || ny < 1 || values.size() != static_cast<std::size_t>(nx) * ny) {
    throw InvalidInput("heatmap: value count does not match the grid");
  }
  // Large grids are pooled into blocks (block minimum) to keep files small.
  const int step = std::max(1, (std::max(nx, ny) + 159) / 160);
  const int bx = (nx + step - 1) / step;
  const int by = (ny + step - 1) / step;
  std::vector<double> pooled(static_cast<std::size_t>(bx) * by, std::numeric_limits<double>::infinity());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double& dst = pooled[static_cast<std::size_t>(j / step) * bx + i / step];
      dst = std::min(dst, values[static_cast<std::size_t>(j) * nx + i]);
    }
  }
  Range r;
  for (double v : pooled) r.add(v);
  r.settle();
  const int cell = std::max(1, 480 / std::max(bx, by));
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\" shape-rendering=\"crispEdges\">\n<text x=\"4\" y=\"16\">{}</text>\n",
      bx * cell, by * cell + 24, escape(title));
  for (int j = 0; j < by; ++j) {
    for (int i = 0; i < bx; ++i) {
      const double v = pooled[static_cast<std::size_t>(j) * bx + i];
      const int g = std::isfinite(v) ? static_cast<int>(std::lround(255.0 * (v - r.lo) / (r.hi - r.lo))) : 255;
      out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},{})\"/>\n", i * cell,
                         24 + j * cell, cell, cell, g, g, g);
    }
  }
  out += "</svg>\n";
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace dfetrack::svg
