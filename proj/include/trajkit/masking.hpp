#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/trajectory.hpp"

// Masking strategies for self-supervised reconstruction. All indices are
// 0-based positions within the trajectory. Index 0 is never masked: the
// model normalizes coordinates relative to the first point, so the anchor
// must stay observable. Mask sizes are clamped to [1, n-2] so there is
// always at least one target and at least two visible points.

namespace trajkit {

enum class MaskStrategy { kRandom = 0, kBlock = 1, kKeyPoints = 2, kLastN = 3 };

inline const char* mask_strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::kRandom: return "random";
    case MaskStrategy::kBlock: return "block";
    case MaskStrategy::kKeyPoints: return "key_points";
    case MaskStrategy::kLastN: return "last_n";
  }
  return "?";
}

struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::kRandom;
  double ratio = 0.5;
  double rdp_epsilon_m = 25.0;  // key-point deviation threshold
  // Mixture over {random, block, key_points, last_n}, in that order.
  std::array<double, 4> mixture_weights = {0.70, 0.05, 0.15, 0.10};
};

inline void validate_mask_spec(const MaskSpec& spec) {
  if (!(spec.ratio > 0.0 && spec.ratio < 1.0)) throw Error("MaskSpec: ratio must be in (0, 1)");
  if (!(spec.rdp_epsilon_m > 0.0)) throw Error("MaskSpec: rdp_epsilon_m must be positive");
  double sum = 0.0;
  for (double w : spec.mixture_weights) {
    if (w < 0.0) throw Error("MaskSpec: negative mixture weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("MaskSpec: mixture weights must sum to 1");
}

struct MaskedTrajectory {
  Trajectory base;
  std::vector<std::size_t> masked;   // sorted, within [1, n-1]
  std::vector<std::size_t> visible;  // sorted complement; visible[j] is the
                                     // original index of visible token j
};

inline std::size_t mask_count(double ratio, std::size_t n) {
  const auto target = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(ratio * static_cast<double>(n))));
  return std::min<std::size_t>(target, n - 2);
}

namespace detail {

inline MaskedTrajectory make_masked(Trajectory base, std::vector<std::size_t> masked) {
  std::sort(masked.begin(), masked.end());
  MaskedTrajectory mt;
  mt.visible.reserve(base.points.size() - masked.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < base.points.size(); ++i) {
    if (next < masked.size() && masked[next] == i) {
      ++next;
    } else {
      mt.visible.push_back(i);
    }
  }
  mt.base = std::move(base);
  mt.masked = std::move(masked);
  return mt;
}

inline void require_maskable(const Trajectory& traj) {
  if (traj.points.size() < 4) throw TooShort("masking: need at least 4 points");
}

// First `count` elements of a seeded partial Fisher-Yates pass over `pool`.
inline std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool,
                                                         std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace detail

inline MaskedTrajectory mask_random(const Trajectory& traj, double ratio, std::uint64_t seed) {
  detail::require_maskable(traj);
  const std::size_t n = traj.points.size();
  const std::size_t count = mask_count(ratio, n);
  std::vector<std::size_t> pool(n - 1);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;  // index 0 excluded
  Rng rng(seed);
  return detail::make_masked(traj, detail::draw_without_replacement(std::move(pool), count, rng));
}

inline MaskedTrajectory mask_block(const Trajectory& traj, double ratio, std::uint64_t seed) {
  detail::require_maskable(traj);
  const std::size_t n = traj.points.size();
  const std::size_t b = mask_count(ratio, n);
  Rng rng(seed);
  const std::size_t start = 1 + rng.uniform_index(n - b);  // block stays right of index 0
  std::vector<std::size_t> masked(b);
  for (std::size_t i = 0; i < b; ++i) masked[i] = start + i;
  return detail::make_masked(traj, std::move(masked));
}

// Ramer-Douglas-Peucker turning points on the local metric plane. Returns
// the sorted interior indices whose deviation drives the recursion; the two
// endpoints are never part of the result. Ties on the maximum deviation keep
// the lowest index (strict > update). Empty when nothing deviates by more
// than epsilon_m.
inline std::vector<std::size_t> rdp_key_points(const Trajectory& traj, double epsilon_m) {
  const std::size_t n = traj.points.size();
  std::vector<std::size_t> keys;
  if (n < 3) return keys;

  double lat_sum = 0.0;
  for (const TrajPoint& p : traj.points) lat_sum += p.pos.lat;
  const double cos_lat0 = std::cos(geo::deg2rad(lat_sum / static_cast<double>(n)));
  const GeoPoint origin = traj.points.front().pos;
  std::vector<geo::PlanarPoint> plane(n);
  for (std::size_t i = 0; i < n; ++i)
    plane[i] = geo::to_local_plane(traj.points[i].pos, origin, cos_lat0);

  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, n - 1}};
  while (!stack.empty()) {
    const auto [s, e] = stack.back();
    stack.pop_back();
    if (e <= s + 1) continue;
    double d_max = 0.0;
    std::size_t k = s;
    for (std::size_t i = s + 1; i < e; ++i) {
      const double d = geo::point_line_distance(plane[i], plane[s], plane[e]);
      if (d > d_max) {
        d_max = d;
        k = i;
      }
    }
    if (d_max > epsilon_m) {
      keys.push_back(k);
      stack.push_back({k, e});
      stack.push_back({s, k});
    }
  }
  std::sort(keys.begin(), keys.end());
  return keys;
}

inline MaskedTrajectory mask_key_points(const Trajectory& traj, double ratio, double epsilon_m,
                                        std::uint64_t seed) {
  detail::require_maskable(traj);
  std::vector<std::size_t> keys = rdp_key_points(traj, epsilon_m);
  if (keys.empty()) return mask_random(traj, ratio, seed);
  const std::size_t cap = mask_count(ratio, traj.points.size());
  if (keys.size() > cap) {
    Rng rng(seed);
    keys = detail::draw_without_replacement(std::move(keys), cap, rng);
  }
  return detail::make_masked(traj, std::move(keys));
}

inline MaskedTrajectory mask_last_n(const Trajectory& traj, double ratio) {
  detail::require_maskable(traj);
  const std::size_t n = traj.points.size();
  const std::size_t count = mask_count(ratio, n);
  std::vector<std::size_t> masked(count);
  for (std::size_t i = 0; i < count; ++i) masked[i] = n - count + i;
  return detail::make_masked(traj, std::move(masked));
}

// Convenience for the prediction task: hide exactly the last `horizon`
// points regardless of ratio arithmetic.
inline MaskedTrajectory mask_last_points(const Trajectory& traj, std::size_t horizon) {
  detail::require_maskable(traj);
  const std::size_t n = traj.points.size();
  const std::size_t count = std::min<std::size_t>(std::max<std::size_t>(horizon, 1), n - 2);
  std::vector<std::size_t> masked(count);
  for (std::size_t i = 0; i < count; ++i) masked[i] = n - count + i;
  return detail::make_masked(traj, std::move(masked));
}

inline MaskStrategy sample_strategy(const MaskSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<double> w(spec.mixture_weights.begin(), spec.mixture_weights.end());
  return static_cast<MaskStrategy>(rng.categorical(w));
}

inline MaskedTrajectory mask_with(const Trajectory& traj, MaskStrategy strategy,
                                  const MaskSpec& spec, std::uint64_t seed) {
  switch (strategy) {
    case MaskStrategy::kRandom: return mask_random(traj, spec.ratio, seed);
    case MaskStrategy::kBlock: return mask_block(traj, spec.ratio, seed);
    case MaskStrategy::kKeyPoints:
      return mask_key_points(traj, spec.ratio, spec.rdp_epsilon_m, seed);
    case MaskStrategy::kLastN: return mask_last_n(traj, spec.ratio);
  }
  throw Error("mask_with: unknown strategy");
}

}  // namespace trajkit
