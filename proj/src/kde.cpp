#include "dpgkit/kde.hpp"

#include <algorithm>
#include <cmath>

#include "dpgkit/util.hpp"

namespace dpgkit {

using nlohmann::json;

namespace {

double scott(const std::vector<Point2>& s, double Point2::*axis) {
  if (s.size() < 2) return Kde2D::kBandwidthFloor;
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (const auto& p : s) mean += p.*axis;
  mean /= n;
  double var = 0.0;
  for (const auto& p : s) var += (p.*axis - mean) * (p.*axis - mean);
  var /= n - 1.0;
  return std::max(Kde2D::kBandwidthFloor, std::pow(n, -1.0 / 6.0) * std::sqrt(var));
}

}  // namespace

Kde2D Kde2D::fit(std::vector<Point2> samples, std::optional<Point2> bandwidth) {
  if (samples.empty()) throw DataError("KDE needs at least one sample");
  for (const auto& p : samples)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NumericError("non-finite KDE sample");
  Kde2D k;
  if (bandwidth) {
    if (!(bandwidth->x > 0.0 && bandwidth->y > 0.0)) throw std::invalid_argument("KDE bandwidth must be positive");
    k.bandwidth_ = *bandwidth;
  } else {
    k.bandwidth_ = {scott(samples, &Point2::x), scott(samples, &Point2::y)};
  }
  k.samples_ = std::move(samples);
  return k;
}

double Kde2D::eval(Point2 p) const {
  const double hx = bandwidth_.x, hy = bandwidth_.y;
  double sum = 0.0;
  for (const auto& s : samples_) {
    const double dx = (p.x - s.x) / hx, dy = (p.y - s.y) / hy;
    sum += std::exp(-0.5 * (dx * dx + dy * dy));
  }
  return sum / (static_cast<double>(samples_.size()) * 2.0 * M_PI * hx * hy);
}

double Kde2D::grid_peak(int n) const {
  double peak = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) peak = std::max(peak, eval({(i + 0.5) / n, (j + 0.5) / n}));
  return peak;
}

json Kde2D::to_json() const {
  json j;
  j["format"] = "dpgkit-kde";
  j["version"] = 1;
  j["bandwidth"] = {bandwidth_.x, bandwidth_.y};
  std::vector<double> xs, ys;
  for (const auto& s : samples_) {
    xs.push_back(s.x);
    ys.push_back(s.y);
  }
  j["x"] = xs;
  j["y"] = ys;
  return j;
}

Kde2D Kde2D::from_json(const json& j) {
  if (j.value("format", "") != "dpgkit-kde" || j.value("version", 0) != 1)
    throw DataError("not a version-1 dpgkit KDE");
  const auto xs = j.at("x").get<std::vector<double>>();
  const auto ys = j.at("y").get<std::vector<double>>();
  if (xs.size() != ys.size()) throw DataError("KDE sample arrays disagree in length");
  std::vector<Point2> s;
  for (std::size_t i = 0; i < xs.size(); ++i) s.push_back({xs[i], ys[i]});
  const auto bw = j.at("bandwidth").get<std::vector<double>>();
  if (bw.size() != 2) throw DataError("KDE bandwidth must have two entries");
  return fit(std::move(s), Point2{bw[0], bw[1]});
}

}  // namespace dpgkit
