#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

namespace dpgkit {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Gaussian product-kernel density estimate over (x, y).
class Kde2D {
 public:
  static constexpr double kBandwidthFloor = 1e-3;

  /// Bandwidth defaults to Scott's rule per axis, h = n^(-1/6) * sigma,
  /// floored at kBandwidthFloor.
  static Kde2D fit(std::vector<Point2> samples, std::optional<Point2> bandwidth = std::nullopt);

  double eval(Point2 p) const;
  /// Maximum of eval over the centers of an n x n grid on the unit square.
  double grid_peak(int n = 64) const;

  const std::vector<Point2>& samples() const { return samples_; }
  Point2 bandwidth() const { return bandwidth_; }

  nlohmann::json to_json() const;
  static Kde2D from_json(const nlohmann::json& j);

 private:
  std::vector<Point2> samples_;
  Point2 bandwidth_;
};

}  // namespace dpgkit
