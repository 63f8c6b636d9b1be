#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "trajkit/errors.hpp"

namespace trajkit {

// WGS84 coordinate in degrees. lng in [-180, 180], lat in [-90, 90].
// Values that enter a dataset are carried at 6-decimal precision
// (~0.1 m at the equator); see geo::round6.
struct GeoPoint {
  double lng = 0.0;
  double lat = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool coords_valid(const GeoPoint& p) {
  return std::isfinite(p.lng) && std::isfinite(p.lat) &&
         p.lng >= -180.0 && p.lng <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

// One GPS fix: position plus seconds since the Unix epoch. t is real-valued
// on ingest and integer-valued once a trajectory has been normalized to 1 Hz.
struct TrajPoint {
  GeoPoint pos;
  double t = 0.0;

  friend bool operator==(const TrajPoint&, const TrajPoint&) = default;
};

struct Trajectory {
  std::string id;
  std::vector<TrajPoint> points;               // strictly increasing in t
  std::map<std::string, std::string> meta;

  std::size_t size() const { return points.size(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct TrajectoryDataset {
  std::vector<Trajectory> trajectories;
  std::string provenance;

  std::size_t size() const { return trajectories.size(); }

  friend bool operator==(const TrajectoryDataset&, const TrajectoryDataset&) = default;
};

// Throws on a violated Trajectory invariant; used at ingest boundaries.
inline void validate_trajectory(const Trajectory& traj) {
  if (traj.points.size() < 2)
    throw Error("trajectory '" + traj.id + "': fewer than 2 points");
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    if (!coords_valid(traj.points[i].pos))
      throw Error("trajectory '" + traj.id + "': coordinates out of range at point " +
                  std::to_string(i));
    if (i > 0 && !(traj.points[i].t > traj.points[i - 1].t))
      throw Error("trajectory '" + traj.id + "': timestamps not strictly increasing at point " +
                  std::to_string(i));
  }
}

inline void validate_dataset(const TrajectoryDataset& ds) {
  std::map<std::string, std::size_t> seen;
  for (const Trajectory& traj : ds.trajectories) {
    validate_trajectory(traj);
    if (++seen[traj.id] > 1)
      throw Error("dataset: duplicate trajectory id '" + traj.id + "'");
  }
}

}  // namespace trajkit
