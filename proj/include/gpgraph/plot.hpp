#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/partition.hpp"
#include "gpgraph/trajectories.hpp"

namespace gpgraph {

// Convex hull (monotone chain), counter-clockwise, collinear points dropped.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

struct PlotInput {
  TrajectoryWindow window;
  GroupPartition partition;
  Array samples;  // S x N x T_pred x 2, may be empty
};

// SVG of one window: group hulls around the last observed positions,
// observed tracks, sampled futures (thin, coloured by group) and the ground
// truth future (dashed).
inline std::string render_svg(const PlotInput& in, double width = 640.0) {
  static constexpr std::array<const char*, 8> palette = {
      "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const TrajectoryWindow& w = in.window;
  const std::size_t n = w.size();

  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  auto extend = [&](double x, double y) {
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < w.obs_length(); ++t) extend(w.obs.at(i, t, 0), w.obs.at(i, t, 1));
    for (std::size_t t = 0; t < w.pred_length(); ++t) extend(w.fut.at(i, t, 0), w.fut.at(i, t, 1));
  }
  if (in.samples.rank() == 4)
    for (std::size_t k = 0; k < in.samples.dim(0); ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < in.samples.dim(2); ++t)
          extend(in.samples.at(k, i, t, 0), in.samples.at(k, i, t, 1));
  if (n == 0) lo_x = lo_y = 0, hi_x = hi_y = 1;
  const double pad = 1.0;
  lo_x -= pad, lo_y -= pad, hi_x += pad, hi_y += pad;
  const double scale = width / std::max(hi_x - lo_x, 1e-9);
  const double height = std::max(hi_y - lo_y, 1e-9) * scale;
  auto px = [&](double x) { return (x - lo_x) * scale; };
  auto py = [&](double y) { return (hi_y - y) * scale; };  // y up
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(2);
    os << std::fixed << v;
    return os.str();
  };
  auto colour = [&](std::size_t i) {
    return palette[in.partition.member_of(i) % palette.size()];
  };
  auto polyline = [&](const std::vector<Point>& pts, const std::string& style) {
    std::string s = "<polyline fill=\"none\" " + style + " points=\"";
    for (const Point& p : pts) s += fmt(px(p[0])) + "," + fmt(py(p[1])) + " ";
    return s + "\"/>\n";
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
                    "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " +
                    fmt(height) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t g = 0; g < in.partition.group_count(); ++g) {
    const auto& members = in.partition.group(g);
    if (members.size() < 2) continue;
    std::vector<Point> pts;
    for (std::size_t i : members)
      pts.push_back({w.obs.at(i, w.obs_length() - 1, 0), w.obs.at(i, w.obs_length() - 1, 1)});
    std::vector<Point> hull = convex_hull(pts);
    std::string s = "<polygon fill=\"" + std::string(palette[g % palette.size()]) +
                    "\" fill-opacity=\"0.15\" stroke=\"" + palette[g % palette.size()] +
                    "\" stroke-width=\"" + fmt(0.4 * scale) + "\" stroke-linejoin=\"round\" "
                    "stroke-opacity=\"0.15\" points=\"";
    for (const Point& p : hull) s += fmt(px(p[0])) + "," + fmt(py(p[1])) + " ";
    svg += s + "\"/>\n";
  }
  if (in.samples.rank() == 4)
    for (std::size_t k = 0; k < in.samples.dim(0); ++k)
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<Point> pts = {{w.obs.at(i, w.obs_length() - 1, 0), w.obs.at(i, w.obs_length() - 1, 1)}};
        for (std::size_t t = 0; t < in.samples.dim(2); ++t)
          pts.push_back({in.samples.at(k, i, t, 0), in.samples.at(k, i, t, 1)});
        svg += polyline(pts, "stroke=\"" + std::string(colour(i)) +
                                 "\" stroke-opacity=\"0.25\" stroke-width=\"1\"");
      }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Point> obs, fut = {{w.obs.at(i, w.obs_length() - 1, 0), w.obs.at(i, w.obs_length() - 1, 1)}};
    for (std::size_t t = 0; t < w.obs_length(); ++t) obs.push_back({w.obs.at(i, t, 0), w.obs.at(i, t, 1)});
    for (std::size_t t = 0; t < w.pred_length(); ++t) fut.push_back({w.fut.at(i, t, 0), w.fut.at(i, t, 1)});
    svg += polyline(obs, "stroke=\"" + std::string(colour(i)) + "\" stroke-width=\"2.5\"");
    svg += polyline(fut, "stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"4 3\"");
    const Point& last = obs.back();
    svg += "<circle cx=\"" + fmt(px(last[0])) + "\" cy=\"" + fmt(py(last[1])) +
           "\" r=\"3\" fill=\"" + colour(i) + "\"><title>" + std::to_string(w.ped_ids[i]) +
           "</title></circle>\n";
  }
  return svg + "</svg>\n";
}

}  // namespace gpgraph
