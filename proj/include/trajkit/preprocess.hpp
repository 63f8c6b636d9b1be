#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/trajectory.hpp"

// Normalization and filtering ahead of resampling/training: trajectories are
// put on a 1 Hz integer-second grid (first fix per one-second window kept,
// short gaps interpolated, long gaps split), then filtered by length, covered
// distance, speed band, and loop shape, in that fixed order.

namespace trajkit {

struct FilterPolicy {
  std::size_t min_points = 32;
  double min_distance_m = 100.0;
  double max_speed_kmh = 120.0;
  double min_speed_kmh = 0.5;
  double loop_endpoint_m = 100.0;   // endpoints closer than this ...
  double loop_min_path_m = 1000.0;  // ... on a path longer than this => loop
  double max_gap_s = 15.0;          // interpolation cap; larger gaps split
};

inline void validate_policy(const FilterPolicy& p) {
  if (!(p.min_points > 0 && p.min_distance_m > 0.0 && p.max_gap_s > 0.0 &&
        p.loop_endpoint_m > 0.0 && p.loop_min_path_m > 0.0 && p.min_speed_kmh > 0.0 &&
        p.min_speed_kmh < p.max_speed_kmh))
    throw Error("FilterPolicy: thresholds must be positive with min_speed < max_speed");
}

// Consecutive seconds at sub-minimum speed tolerated before the speed rule
// fires; traffic stops are authentic movement, indefinite dwell is not.
inline constexpr std::size_t kDwellToleranceS = 10;

enum class FilterRule { kLength, kDistance, kSpeed, kLoop };

inline const char* filter_rule_name(FilterRule r) {
  switch (r) {
    case FilterRule::kLength: return "length";
    case FilterRule::kDistance: return "distance";
    case FilterRule::kSpeed: return "speed";
    case FilterRule::kLoop: return "loop";
  }
  return "?";
}

struct FilterReport {
  std::size_t inputs = 0;      // raw trajectories entering the pipeline
  std::size_t candidates = 0;  // 1 Hz fragments produced by normalization
  std::size_t kept = 0;
  std::map<std::string, std::size_t> rejected_by_rule;

  std::size_t rejected_total() const {
    std::size_t sum = 0;
    for (const auto& [rule, n] : rejected_by_rule) sum += n;
    return sum;
  }
};

// Resamples one trajectory onto the integer-second grid. Within each
// one-second window the first fix wins and is stamped with the window's
// integer second. Gaps of 2..max_gap_s seconds are filled by per-second
// linear interpolation on the chord; longer gaps split the trajectory.
// Fragments with fewer than 2 points are not returned; their count is
// reported through singleton_fragments so callers can account for them.
inline std::vector<Trajectory> normalize_1hz(const Trajectory& traj, double max_gap_s,
                                             std::size_t* singleton_fragments = nullptr) {
  // One representative per window, stamped to the window second.
  std::vector<TrajPoint> grid;
  grid.reserve(traj.points.size());
  for (const TrajPoint& p : traj.points) {
    const double sec = std::floor(p.t);
    if (grid.empty() || sec > grid.back().t) grid.push_back({p.pos, sec});
  }

  std::vector<std::vector<TrajPoint>> fragments;
  fragments.emplace_back();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (fragments.back().empty()) {
      fragments.back().push_back(grid[i]);
      continue;
    }
    // By value: the interpolation loop below grows the same vector.
    const TrajPoint prev = fragments.back().back();
    const double gap = grid[i].t - prev.t;
    if (gap > max_gap_s) {
      fragments.emplace_back();
      fragments.back().push_back(grid[i]);
      continue;
    }
    for (double t = prev.t + 1.0; t < grid[i].t; t += 1.0) {
      const double f = (t - prev.t) / gap;
      fragments.back().push_back(
          {geo::round6(GeoPoint{prev.pos.lng + f * (grid[i].pos.lng - prev.pos.lng),
                                prev.pos.lat + f * (grid[i].pos.lat - prev.pos.lat)}),
           t});
    }
    fragments.back().push_back(grid[i]);
  }

  std::vector<Trajectory> out;
  std::size_t singletons = 0;
  for (auto& frag : fragments) {
    if (frag.size() < 2) {
      ++singletons;
      continue;
    }
    Trajectory t;
    t.id = traj.id;  // run_pipeline re-suffixes when a split produced siblings
    t.meta = traj.meta;
    t.points = std::move(frag);
    out.push_back(std::move(t));
  }
  if (singleton_fragments) *singleton_fragments = singletons;
  return out;
}

// Accept (nullopt) or the first violated rule, checked in the fixed order
// length -> distance -> speed -> loop. Expects 1 Hz input.
inline std::optional<FilterRule> apply_filters(const Trajectory& traj,
                                               const FilterPolicy& policy) {
  if (traj.points.size() < policy.min_points) return FilterRule::kLength;

  const double path_m = geo::path_length_m(traj.points);
  if (path_m < policy.min_distance_m) return FilterRule::kDistance;

  std::size_t slow_run = 0;
  for (std::size_t i = 1; i < traj.points.size(); ++i) {
    const double v = geo::speed_kmh(traj.points[i - 1], traj.points[i]);
    if (v > policy.max_speed_kmh) return FilterRule::kSpeed;
    if (v < policy.min_speed_kmh) {
      if (++slow_run > kDwellToleranceS) return FilterRule::kSpeed;
    } else {
      slow_run = 0;
    }
  }

  if (geo::haversine_m(traj.points.front().pos, traj.points.back().pos) < policy.loop_endpoint_m &&
      path_m > policy.loop_min_path_m)
    return FilterRule::kLoop;

  return std::nullopt;
}

// Hook for road-network alignment; the default pipeline runs the identity.
using MapMatcher = std::function<Trajectory(const Trajectory&)>;

inline std::pair<TrajectoryDataset, FilterReport> run_pipeline(
    const TrajectoryDataset& ds, const FilterPolicy& policy,
    const MapMatcher& map_matcher = nullptr) {
  validate_policy(policy);
  TrajectoryDataset out;
  out.provenance = ds.provenance;
  FilterReport report;
  report.inputs = ds.trajectories.size();
  report.rejected_by_rule = {{"length", 0}, {"distance", 0}, {"speed", 0}, {"loop", 0}};

  for (const Trajectory& input : ds.trajectories) {
    std::size_t singletons = 0;
    std::vector<Trajectory> fragments = normalize_1hz(input, policy.max_gap_s, &singletons);
    report.candidates += fragments.size() + singletons;
    report.rejected_by_rule["length"] += singletons;  // a singleton fails the length rule

    for (std::size_t k = 0; k < fragments.size(); ++k) {
      Trajectory frag = std::move(fragments[k]);
      if (fragments.size() > 1) frag.id += "#" + std::to_string(k + 1);
      if (map_matcher) frag = map_matcher(frag);
      if (const auto rule = apply_filters(frag, policy)) {
        ++report.rejected_by_rule[filter_rule_name(*rule)];
      } else {
        ++report.kept;
        out.trajectories.push_back(std::move(frag));
      }
    }
  }
  return {std::move(out), std::move(report)};
}

}  // namespace trajkit
