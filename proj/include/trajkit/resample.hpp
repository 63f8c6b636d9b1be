#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/trajectory.hpp"

// Length-adaptive downsampling plus fixed-interval thinning. Short
// trajectories are kept whole; long ones are compressed by a logarithmic
// sampling ratio with a hard output cap, so downstream sequence lengths are
// bounded regardless of input size.

namespace trajkit {

struct ResamplePolicy {
  std::size_t n_min = 36;   // at or below: keep everything
  std::size_t n_max = 600;  // at or above: ratio bottoms out
  double r_min = 0.35;      // ratio floor

  // Hard cap on output length, tied to the policy by construction.
  std::size_t m_max() const {
    return static_cast<std::size_t>(std::llround(r_min * static_cast<double>(n_max)));
  }
};

inline void validate_policy(const ResamplePolicy& p) {
  if (!(p.n_min >= 2 && p.n_min < p.n_max && p.r_min > 0.0 && p.r_min <= 1.0))
    throw Error("ResamplePolicy: need 2 <= n_min < n_max and r_min in (0, 1]");
}

// Fraction of points to keep for a trajectory of length n: 1 up to n_min,
// r_min from n_max on, logarithmic decay between. Nonincreasing in n.
inline double sampling_ratio(std::size_t n, const ResamplePolicy& policy) {
  if (n <= policy.n_min) return 1.0;
  if (n >= policy.n_max) return policy.r_min;
  const double phi = std::log(static_cast<double>(n - policy.n_min + 1)) /
                     std::log(static_cast<double>(policy.n_max - policy.n_min + 1));
  return 1.0 - (1.0 - policy.r_min) * phi;
}

// Keeps m = min(round(R(n) * n), m_max) points at uniformly spaced index
// positions, always including both endpoints (m is floored at 2 for that
// reason). Deterministic; rng_seed is reserved for jittered variants.
inline Trajectory dynamic_resample(const Trajectory& traj, const ResamplePolicy& policy,
                                   std::uint64_t rng_seed = 0) {
  (void)rng_seed;
  const std::size_t n = traj.points.size();
  if (n < 2) throw TooShort("dynamic_resample: need at least 2 points");
  const double r = sampling_ratio(n, policy);
  std::size_t m = static_cast<std::size_t>(std::llround(r * static_cast<double>(n)));
  m = std::min(m, policy.m_max());
  m = std::max<std::size_t>(m, 2);

  Trajectory out;
  out.id = traj.id;
  out.meta = traj.meta;
  out.points.reserve(m);
  if (m >= n) {
    out.points = traj.points;
    return out;
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double pos = static_cast<double>(j) * static_cast<double>(n - 1) /
                       static_cast<double>(m - 1);
    out.points.push_back(traj.points[static_cast<std::size_t>(std::llround(pos))]);
  }
  return out;
}

// Keeps every dt-th point starting from the first (indices 0, dt, 2dt, ...).
// Pure index arithmetic; makes no claim about the resulting time gaps.
inline Trajectory thin_by_index(const Trajectory& traj, std::size_t dt) {
  if (dt < 1) throw Error("thin_by_index: dt must be >= 1");
  Trajectory out;
  out.id = traj.id;
  out.meta = traj.meta;
  for (std::size_t i = 0; i < traj.points.size(); i += dt) out.points.push_back(traj.points[i]);
  if (out.points.size() < 2)
    throw TooShort("thin_by_index: fewer than 2 points would remain");
  return out;
}

// Index thinning on a 1 Hz trajectory, so every output gap is exactly dt
// seconds. The 1 Hz precondition is checked because the uniform-interval
// guarantee is the whole point of this operation.
inline Trajectory interval_resample(const Trajectory& traj, std::size_t dt) {
  for (std::size_t i = 1; i < traj.points.size(); ++i)
    if (traj.points[i].t - traj.points[i - 1].t != 1.0)
      throw Error("interval_resample: input is not on the 1 Hz grid");
  return thin_by_index(traj, dt);
}

}  // namespace trajkit
