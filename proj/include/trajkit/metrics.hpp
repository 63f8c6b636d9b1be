#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/trajectory.hpp"

// Evaluation metrics: haversine MAE/RMSE over a chosen index set,
// exact-match accuracy, and the Jensen-Shannon divergence between gridded
// point densities of two datasets.

namespace trajkit {

struct MetricReport {
  double mae_m = 0.0;
  double rmse_m = 0.0;
  std::optional<double> accuracy;
  std::optional<double> density_jsd;  // nats, in [0, ln 2]
  std::size_t n_points = 0;
};

inline void validate_report(const MetricReport& r) {
  if (!(r.rmse_m >= r.mae_m && r.mae_m >= 0.0))
    throw Error("MetricReport: requires rmse >= mae >= 0");
  if (r.accuracy && !(*r.accuracy >= 0.0 && *r.accuracy <= 1.0))
    throw Error("MetricReport: accuracy out of [0,1]");
  if (r.density_jsd && !(*r.density_jsd >= 0.0 && *r.density_jsd <= std::log(2.0)))
    throw Error("MetricReport: density_jsd out of [0, ln 2]");
}

// Per-point haversine errors at eval_indices; MAE is their mean, RMSE the
// root of their mean square.
inline std::pair<double, double> mae_rmse(const std::vector<GeoPoint>& pred,
                                          const std::vector<GeoPoint>& truth,
                                          const std::vector<std::size_t>& eval_indices) {
  if (pred.size() != truth.size()) throw LengthMismatch("mae_rmse: sequence lengths differ");
  if (eval_indices.empty()) throw EmptyEvalSet("mae_rmse: empty evaluation index set");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t idx : eval_indices) {
    if (idx >= pred.size()) throw LengthMismatch("mae_rmse: evaluation index out of range");
    const double e = geo::haversine_m(pred[idx], truth[idx]);
    sum += e;
    sum_sq += e * e;
  }
  const double n = static_cast<double>(eval_indices.size());
  return {sum / n, std::sqrt(sum_sq / n)};
}

struct EvalItem {
  std::vector<GeoPoint> pred;
  std::vector<GeoPoint> truth;
  std::vector<std::size_t> eval_indices;
};

// Pooled across all points by default; per_trajectory averages each
// trajectory's own MAE/RMSE with equal weight instead.
inline std::pair<double, double> mae_rmse_dataset(const std::vector<EvalItem>& items,
                                                  bool per_trajectory = false) {
  if (items.empty()) throw EmptyEvalSet("mae_rmse_dataset: no items");
  if (per_trajectory) {
    double mae = 0.0, rmse = 0.0;
    for (const EvalItem& it : items) {
      const auto [m, r] = mae_rmse(it.pred, it.truth, it.eval_indices);
      mae += m;
      rmse += r;
    }
    const double n = static_cast<double>(items.size());
    return {mae / n, rmse / n};
  }
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  for (const EvalItem& it : items) {
    if (it.pred.size() != it.truth.size())
      throw LengthMismatch("mae_rmse_dataset: sequence lengths differ");
    for (std::size_t idx : it.eval_indices) {
      if (idx >= it.pred.size())
        throw LengthMismatch("mae_rmse_dataset: evaluation index out of range");
      const double e = geo::haversine_m(it.pred[idx], it.truth[idx]);
      sum += e;
      sum_sq += e * e;
      ++count;
    }
  }
  if (count == 0) throw EmptyEvalSet("mae_rmse_dataset: no evaluation points");
  const double n = static_cast<double>(count);
  return {sum / n, std::sqrt(sum_sq / n)};
}

inline double accuracy(const std::vector<long long>& pred_labels,
                       const std::vector<long long>& true_labels) {
  if (pred_labels.size() != true_labels.size() || pred_labels.empty())
    throw LengthMismatch("accuracy: label sequences must be nonempty and equal length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred_labels.size(); ++i)
    if (pred_labels[i] == true_labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred_labels.size());
}

namespace detail {

inline std::vector<double> grid_histogram(const TrajectoryDataset& ds, const geo::BBox& bbox,
                                          std::size_t grid) {
  std::vector<double> h(grid * grid, 0.0);
  std::size_t total = 0;
  const double span_lng = bbox.max_lng - bbox.min_lng;
  const double span_lat = bbox.max_lat - bbox.min_lat;
  for (const Trajectory& traj : ds.trajectories) {
    for (const TrajPoint& p : traj.points) {
      if (!geo::contains(bbox, p.pos))
        throw Error("density_jsd: point outside the shared bounding box");
      // Points on the max edge land in the last cell: total-coverage split.
      auto cell = [grid](double v, double lo, double span) {
        if (span <= 0.0) return std::size_t{0};
        const auto c = static_cast<std::size_t>((v - lo) / span * static_cast<double>(grid));
        return std::min(c, grid - 1);
      };
      h[cell(p.pos.lat, bbox.min_lat, span_lat) * grid +
        cell(p.pos.lng, bbox.min_lng, span_lng)] += 1.0;
      ++total;
    }
  }
  if (total == 0) throw EmptyDataset("density_jsd: dataset has no points");
  for (double& v : h) v /= static_cast<double>(total);
  return h;
}

}  // namespace detail

// Jensen-Shannon divergence (natural log, 0*log 0 = 0) between the gridded
// point distributions of the two datasets. Symmetric; 0 iff the histograms
// agree; at most ln 2 (disjoint supports). The return value is clipped to
// that closed interval to shed floating-point dust.
inline double density_jsd(const TrajectoryDataset& gen, const TrajectoryDataset& ref,
                          const geo::BBox& bbox, std::size_t grid = 16) {
  if (grid == 0) throw Error("density_jsd: grid must be positive");
  const std::vector<double> p = detail::grid_histogram(gen, bbox, grid);
  const std::vector<double> q = detail::grid_histogram(ref, bbox, grid);
  double jsd = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) jsd += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) jsd += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::min(std::max(jsd, 0.0), std::log(2.0));
}

}  // namespace trajkit
