#pragma once

// Reference polyline simplification, written independently of the library
// implementation for cross-checking: plain recursion, perpendicular distance
// from the parametric projection residual. Same semantics: distances on a
// local plane scaled by cos(mean latitude), strict > against epsilon, ties
// keep the lowest index, endpoints never reported.

#include <cmath>
#include <cstddef>
#include <vector>

#include "trajkit/geo.hpp"
#include "trajkit/trajectory.hpp"

namespace oracle {

struct XY {
  double x, y;
};

inline double perp_dist(const XY& p, const XY& a, const XY& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  // Residual of the projection onto the infinite line through a and b.
  const double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  const double rx = p.x - (a.x + t * dx);
  const double ry = p.y - (a.y + t * dy);
  return std::hypot(rx, ry);
}

inline void simplify_rec(const std::vector<XY>& pts, std::size_t lo, std::size_t hi,
                         double epsilon, std::vector<std::size_t>& keys) {
  if (hi <= lo + 1) return;
  double best = 0.0;
  std::size_t best_i = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    const double d = perp_dist(pts[i], pts[lo], pts[hi]);
    if (d > best) {
      best = d;
      best_i = i;
    }
  }
  if (best > epsilon) {
    simplify_rec(pts, lo, best_i, epsilon, keys);
    keys.push_back(best_i);
    simplify_rec(pts, best_i, hi, epsilon, keys);
  }
}

// Interior key points of the trajectory, ascending. Epsilon in meters.
inline std::vector<std::size_t> rdp_keys(const trajkit::Trajectory& traj, double epsilon_m) {
  const std::size_t n = traj.points.size();
  std::vector<std::size_t> keys;
  if (n < 3) return keys;
  double mean_lat = 0.0;
  for (const auto& p : traj.points) mean_lat += p.pos.lat;
  mean_lat /= static_cast<double>(n);
  const double cos_lat = std::cos(trajkit::geo::deg2rad(mean_lat));
  std::vector<XY> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i].x = traj.points[i].pos.lng * cos_lat * trajkit::geo::kMetersPerDegree;
    pts[i].y = traj.points[i].pos.lat * trajkit::geo::kMetersPerDegree;
  }
  simplify_rec(pts, 0, n - 1, epsilon_m, keys);
  return keys;
}

}  // namespace oracle
