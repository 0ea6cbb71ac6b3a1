#include "dpgkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dpgkit {

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double center_distance(const Box& a, const Box& b) {
  return std::hypot(b.cx() - a.cx(), b.cy() - a.cy());
}

double union_coverage(std::span<const Box> boxes) {
  // Coordinate compression over the clipped boxes; n is small.
  std::vector<Box> clipped;
  clipped.reserve(boxes.size());
  for (const Box& b : boxes) {
    Box c{std::clamp(b.x0, 0.0, 1.0), std::clamp(b.y0, 0.0, 1.0),
          std::clamp(b.x1, 0.0, 1.0), std::clamp(b.y1, 0.0, 1.0)};
    if (c.well_formed()) clipped.push_back(c);
  }
  if (clipped.empty()) return 0.0;
  std::vector<double> xs;
  for (const Box& b : clipped) {
    xs.push_back(b.x0);
    xs.push_back(b.x1);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  double total = 0.0;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double mx = 0.5 * (xs[i] + xs[i + 1]);
    spans.clear();
    for (const Box& b : clipped)
      if (mx > b.x0 && mx < b.x1) spans.emplace_back(b.y0, b.y1);
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    double covered = 0.0;
    double lo = spans[0].first, hi = spans[0].second;
    for (const auto& [a, b] : spans) {
      if (a > hi) {
        covered += hi - lo;
        lo = a;
        hi = b;
      } else {
        hi = std::max(hi, b);
      }
    }
    covered += hi - lo;
    total += covered * (xs[i + 1] - xs[i]);
  }
  return total;
}

}  // namespace dpgkit
