#pragma once

#include <cmath>
#include <numbers>

#include "trajkit/errors.hpp"
#include "trajkit/trajectory.hpp"

namespace trajkit::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

// Arc length of one degree along a meridian: pi/180 * R.
inline constexpr double kMetersPerDegree = std::numbers::pi / 180.0 * kEarthRadiusM;

inline double deg2rad(double d) { return d * (std::numbers::pi / 180.0); }

// Great-circle distance in meters on the kEarthRadiusM sphere.
inline double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = deg2rad(b.lat - a.lat);
  const double dlam = deg2rad(b.lng - a.lng);
  const double s = std::sin(dphi / 2.0);
  const double u = std::sin(dlam / 2.0);
  const double h = s * s + std::cos(phi1) * std::cos(phi2) * u * u;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

// Sum of consecutive haversine distances.
inline double path_length_m(const std::vector<TrajPoint>& pts) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    total += haversine_m(pts[i - 1].pos, pts[i].pos);
  return total;
}

// Speed between two fixes in km/h. dt must be positive.
inline double speed_kmh(const TrajPoint& a, const TrajPoint& b) {
  const double dt = b.t - a.t;
  if (!(dt > 0.0)) throw ZeroOrNegativeInterval("speed_kmh: non-positive time interval");
  return haversine_m(a.pos, b.pos) / dt * 3.6;
}

// Local planar coordinates in meters via an equirectangular projection
// anchored at `origin`. Longitude differences are scaled by cos(lat0) so
// distances stay faithful near the anchor; adequate for the few-km extents
// these trajectories cover.
struct PlanarPoint {
  double x = 0.0;  // easting, meters
  double y = 0.0;  // northing, meters
};

inline PlanarPoint to_local_plane(const GeoPoint& p, const GeoPoint& origin, double cos_lat0) {
  return {(p.lng - origin.lng) * kMetersPerDegree * cos_lat0,
          (p.lat - origin.lat) * kMetersPerDegree};
}

inline double planar_dist(const PlanarPoint& a, const PlanarPoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Distance from p to the infinite line through a and b; Euclidean distance
// to a when the segment is degenerate.
inline double point_line_distance(const PlanarPoint& p, const PlanarPoint& a,
                                  const PlanarPoint& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return planar_dist(p, a);
  return std::abs(dy * (p.x - a.x) - dx * (p.y - a.y)) / len;
}

// Quantize a coordinate to 6 decimal places. Applied wherever coordinates
// are produced (ingest, synthesis, model output) so serialized values
// round-trip bit-exactly.
inline double round6(double v) { return std::round(v * 1e6) / 1e6; }

inline GeoPoint round6(const GeoPoint& p) { return {round6(p.lng), round6(p.lat)}; }

struct BBox {
  double min_lng = 0.0;
  double min_lat = 0.0;
  double max_lng = 0.0;
  double max_lat = 0.0;
};

inline bool contains(const BBox& b, const GeoPoint& p) {
  return p.lng >= b.min_lng && p.lng <= b.max_lng && p.lat >= b.min_lat && p.lat <= b.max_lat;
}

inline void expand(BBox& b, const GeoPoint& p) {
  b.min_lng = std::min(b.min_lng, p.lng);
  b.max_lng = std::max(b.max_lng, p.lng);
  b.min_lat = std::min(b.min_lat, p.lat);
  b.max_lat = std::max(b.max_lat, p.lat);
}

// Tight box around every point of the dataset; throws on an empty dataset.
inline BBox bbox_of(const TrajectoryDataset& ds) {
  bool first = true;
  BBox b;
  for (const Trajectory& traj : ds.trajectories) {
    for (const TrajPoint& p : traj.points) {
      if (first) {
        b = {p.pos.lng, p.pos.lat, p.pos.lng, p.pos.lat};
        first = false;
      } else {
        expand(b, p.pos);
      }
    }
  }
  if (first) throw Error("bbox_of: dataset has no points");
  return b;
}

inline BBox bbox_union(const BBox& a, const BBox& b) {
  return {std::min(a.min_lng, b.min_lng), std::min(a.min_lat, b.min_lat),
          std::max(a.max_lng, b.max_lng), std::max(a.max_lat, b.max_lat)};
}

}  // namespace trajkit::geo
