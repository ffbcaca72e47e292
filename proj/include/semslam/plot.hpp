#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "semslam/geometry.hpp"
#include "semslam/io_eval.hpp"
#include "semslam/optimizer.hpp"

namespace semslam {

namespace detail {

inline const char* kCategoryPalette[10] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct PlotFrame {
  double min_x = -1.0, max_x = 1.0, min_y = -1.0, max_y = 1.0;
  double scale = 1.0;
  double pad = 40.0;
  double size = 640.0;

  void include(double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }

  void finalize() {
    const double w = std::max(max_x - min_x, 1e-9);
    const double h = std::max(max_y - min_y, 1e-9);
    scale = (size - 2.0 * pad) / std::max(w, h);
  }

  // data -> pixel, y up in data space
  double px(double x) const { return (x - min_x) * scale + pad; }
  double py(double y) const { return (max_y - y) * scale + pad; }
};

inline void append_polyline(std::string& svg, const PlotFrame& f,
                            const std::vector<Se3Pose>& poses, const char* color,
                            const char* dash) {
  if (poses.empty()) return;
  svg += "<polyline fill=\"none\" stroke=\"";
  svg += color;
  svg += "\" stroke-width=\"2\"";
  if (dash[0] != '\0') {
    svg += " stroke-dasharray=\"";
    svg += dash;
    svg += "\"";
  }
  svg += " points=\"";
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (i) svg += ' ';
    svg += format_double(f.px(poses[i].translation.x()), 6);
    svg += ',';
    svg += format_double(f.py(poses[i].translation.y()), 6);
  }
  svg += "\"/>\n";
}

}  // namespace detail

/// Top-down SVG of a solution: estimated path, optional ground-truth path,
/// landmark markers colored by category. Output bytes depend only on the
/// inputs.
inline std::string render_solution_svg(
    const Solution& sol, const std::vector<Se3Pose>* ground_truth = nullptr) {
  detail::PlotFrame f;
  bool has_point = false;
  const auto include_pose = [&](const Se3Pose& p) {
    if (!has_point) {
      f.min_x = f.max_x = p.translation.x();
      f.min_y = f.max_y = p.translation.y();
      has_point = true;
    } else {
      f.include(p.translation.x(), p.translation.y());
    }
  };
  for (const Se3Pose& p : sol.trajectory) include_pose(p);
  if (ground_truth) {
    for (const Se3Pose& p : *ground_truth) include_pose(p);
  }
  for (const Landmark& lm : sol.landmarks) {
    if (!has_point) {
      f.min_x = f.max_x = lm.position.x();
      f.min_y = f.max_y = lm.position.y();
      has_point = true;
    } else {
      f.include(lm.position.x(), lm.position.y());
    }
  }
  f.finalize();

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
         "viewBox=\"0 0 640 640\">\n";
  svg += "<rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
  if (ground_truth) {
    detail::append_polyline(svg, f, *ground_truth, "#999999", "6,4");
  }
  detail::append_polyline(svg, f, sol.trajectory, "#1f77b4", "");
  for (const Landmark& lm : sol.landmarks) {
    const char* color = lm.category_id >= 0
                            ? detail::kCategoryPalette[lm.category_id % 10]
                            : "#444444";
    svg += "<circle cx=\"";
    svg += format_double(f.px(lm.position.x()), 6);
    svg += "\" cy=\"";
    svg += format_double(f.py(lm.position.y()), 6);
    svg += "\" r=\"5\" fill=\"";
    svg += color;
    svg += "\" stroke=\"#222222\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void write_solution_svg(const Solution& sol,
                               const std::vector<Se3Pose>* ground_truth,
                               const std::string& path) {
  detail::write_file(path, render_solution_svg(sol, ground_truth));
}

}  // namespace semslam
