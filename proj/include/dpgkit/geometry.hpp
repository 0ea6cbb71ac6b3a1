#pragma once

#include <span>

namespace dpgkit {

/// Axis-aligned rectangle in normalized [0,1]^2 diagram coordinates.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool well_formed() const { return x0 < x1 && y0 < y1; }

  bool operator==(const Box&) const = default;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);
double center_distance(const Box& a, const Box& b);

/// Area of the union of the boxes, clipped to the unit square.
double union_coverage(std::span<const Box> boxes);

}  // namespace dpgkit
