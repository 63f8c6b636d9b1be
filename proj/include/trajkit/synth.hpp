#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/trajectory.hpp"

// Seeded synthetic trajectories with known ground truth: random waypoints
// inside a region, constant speed per leg, 1 Hz sampling, Gaussian
// positional noise. Construction keeps every output inside the default
// filter envelope (speed band, length, distance, loop rules), which the
// tests verify by running the preprocessing pipeline as an oracle.

namespace trajkit {

struct SynthSpec {
  std::size_t n_traj = 100;
  std::size_t min_waypoints = 3;
  std::size_t max_waypoints = 8;
  double speed_min_kmh = 20.0;
  double speed_max_kmh = 80.0;
  double noise_sigma_m = 5.0;  // stationary per-axis noise magnitude
  geo::BBox region = {116.30, 39.90, 116.33, 39.93};
  std::uint64_t seed = 42;
};

namespace synth_detail {

// Legs no shorter than this keep even a 2-leg trajectory above the 32-point
// length filter at the top speed (2 * 400 m / 80 km/h = 36 s).
inline constexpr double kMinLegM = 400.0;

// Keeping the last waypoint this far from the first defeats the loop filter
// with margin to spare for noise on both endpoints.
inline constexpr double kMinEndpointSepM = 200.0;

// Noise is AR(1) per axis with this coefficient and stationary standard
// deviation noise_sigma_m. White noise would not do: at 1 Hz, independent
// 5 m jolts on consecutive points produce apparent speeds past the 120 km/h
// filter; correlation keeps point-to-point increments small while leaving
// the marginal distribution Gaussian at full strength.
inline constexpr double kNoiseRho = 0.95;

}  // namespace synth_detail

inline void validate_spec(const SynthSpec& s) {
  if (s.min_waypoints < 3 || s.max_waypoints < s.min_waypoints || s.max_waypoints > 8)
    throw Error("SynthSpec: waypoints must satisfy 3 <= min <= max <= 8");
  if (!(s.speed_min_kmh > 0.5 && s.speed_max_kmh < 120.0 && s.speed_min_kmh < s.speed_max_kmh))
    throw Error("SynthSpec: speed range must lie strictly inside (0.5, 120) km/h");
  if (!(s.noise_sigma_m >= 0.0)) throw Error("SynthSpec: noise_sigma_m must be nonnegative");
  if (!(s.region.min_lng < s.region.max_lng && s.region.min_lat < s.region.max_lat))
    throw Error("SynthSpec: degenerate region");
  if (!coords_valid({s.region.min_lng, s.region.min_lat}) ||
      !coords_valid({s.region.max_lng, s.region.max_lat}))
    throw Error("SynthSpec: region outside coordinate bounds");
  const double mid_lat = 0.5 * (s.region.min_lat + s.region.max_lat);
  const double width_m =
      (s.region.max_lng - s.region.min_lng) * geo::kMetersPerDegree * std::cos(geo::deg2rad(mid_lat));
  const double height_m = (s.region.max_lat - s.region.min_lat) * geo::kMetersPerDegree;
  if (std::hypot(width_m, height_m) < 3.0 * synth_detail::kMinLegM)
    throw Error("SynthSpec: region too small for waypoint legs");
}

inline TrajectoryDataset generate(const SynthSpec& spec) {
  validate_spec(spec);
  const double mid_lat = 0.5 * (spec.region.min_lat + spec.region.max_lat);
  const double cos_mid = std::cos(geo::deg2rad(mid_lat));
  const double m_per_deg_lng = geo::kMetersPerDegree * cos_mid;

  TrajectoryDataset ds;
  ds.provenance = "synth";
  ds.trajectories.reserve(spec.n_traj);

  for (std::size_t ti = 0; ti < spec.n_traj; ++ti) {
    Rng r(mix64(spec.seed, ti));

    const std::size_t n_wp =
        spec.min_waypoints + r.uniform_index(spec.max_waypoints - spec.min_waypoints + 1);
    std::vector<GeoPoint> wps;
    wps.reserve(n_wp);
    auto draw_point = [&] {
      return GeoPoint{r.uniform(spec.region.min_lng, spec.region.max_lng),
                      r.uniform(spec.region.min_lat, spec.region.max_lat)};
    };
    wps.push_back(draw_point());
    while (wps.size() < n_wp) {
      const GeoPoint cand = draw_point();
      if (geo::haversine_m(cand, wps.back()) < synth_detail::kMinLegM) continue;
      if (geo::haversine_m(cand, wps.front()) < synth_detail::kMinEndpointSepM) continue;
      wps.push_back(cand);
    }

    // Constant speed per leg; cumulative travel times bound the 1 Hz clock.
    std::vector<double> leg_end_t(wps.size() - 1);
    std::vector<double> leg_speed(wps.size() - 1);
    double t_acc = 0.0;
    for (std::size_t l = 0; l + 1 < wps.size(); ++l) {
      leg_speed[l] = r.uniform(spec.speed_min_kmh, spec.speed_max_kmh) / 3.6;  // m/s
      t_acc += geo::haversine_m(wps[l], wps[l + 1]) / leg_speed[l];
      leg_end_t[l] = t_acc;
    }
    const auto n_points = static_cast<std::size_t>(std::floor(t_acc)) + 1;

    Trajectory traj;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%06zu", ti);
    traj.id = idbuf;
    traj.points.reserve(n_points);

    double noise_lng_m = spec.noise_sigma_m * r.normal();
    double noise_lat_m = spec.noise_sigma_m * r.normal();
    const double innovation =
        spec.noise_sigma_m * std::sqrt(1.0 - synth_detail::kNoiseRho * synth_detail::kNoiseRho);

    std::size_t leg = 0;
    for (std::size_t i = 0; i < n_points; ++i) {
      const double t = static_cast<double>(i);
      while (leg + 1 < leg_end_t.size() && t > leg_end_t[leg]) ++leg;
      const double leg_start_t = leg == 0 ? 0.0 : leg_end_t[leg - 1];
      const double leg_len_m = geo::haversine_m(wps[leg], wps[leg + 1]);
      const double f = leg_len_m > 0.0
                           ? std::min(1.0, (t - leg_start_t) * leg_speed[leg] / leg_len_m)
                           : 0.0;
      GeoPoint pos{wps[leg].lng + f * (wps[leg + 1].lng - wps[leg].lng),
                   wps[leg].lat + f * (wps[leg + 1].lat - wps[leg].lat)};
      if (i > 0) {
        noise_lng_m = synth_detail::kNoiseRho * noise_lng_m + innovation * r.normal();
        noise_lat_m = synth_detail::kNoiseRho * noise_lat_m + innovation * r.normal();
      }
      pos.lng += noise_lng_m / m_per_deg_lng;
      pos.lat += noise_lat_m / geo::kMetersPerDegree;
      traj.points.push_back({geo::round6(pos), t});
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

}  // namespace trajkit
