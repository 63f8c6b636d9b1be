#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/masking.hpp"
#include "trajkit/model.hpp"
#include "trajkit/resample.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/tensor.hpp"
#include "trajkit/trajectory.hpp"

// Pretraining loop: per sample, adapt the sequence length (dynamic resample,
// then a seeded interval draw thinned by index), truncate to pad_len, draw a
// masking strategy from the mixture, and regress the hidden offsets. Adam
// with cosine learning-rate decay, early stopping on a held-out tail of the
// dataset, snapshot of the best validation state. Bit-identical reruns for
// equal (data, config, seed) are part of the contract.

namespace trajkit {

class Adam {
 public:
  explicit Adam(const std::vector<std::pair<std::string, Mat*>>& params) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& [name, p] : params) {
      m_.push_back(zeros_like(*p));
      v_.push_back(zeros_like(*p));
    }
  }

  void step(const std::vector<std::pair<std::string, Mat*>>& params,
            const std::vector<std::pair<std::string, const Mat*>>& grads, double lr) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw Error("Adam: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      Mat& w = *params[p].second;
      const Mat& g = *grads[p].second;
      if (w.size() != g.size()) throw Error("Adam: gradient shape mismatch at " + params[p].first);
      for (std::size_t i = 0; i < w.a.size(); ++i) {
        m_[p].a[i] = beta1_ * m_[p].a[i] + (1.0 - beta1_) * g.a[i];
        v_[p].a[i] = beta2_ * v_[p].a[i] + (1.0 - beta2_) * g.a[i] * g.a[i];
        const double mhat = m_[p].a[i] / bc1;
        const double vhat = v_[p].a[i] / bc2;
        w.a[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  std::vector<Mat> m_, v_;
  std::size_t t_ = 0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
};

// lr * 0.5 * (1 + cos(pi * epoch / total)): full rate at the start, near
// zero by the final planned epoch.
inline double cosine_lr(double base_lr, std::size_t epoch, std::size_t total_epochs) {
  const double frac = static_cast<double>(epoch) / static_cast<double>(std::max<std::size_t>(
                                                        total_epochs, 1));
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

struct SamplePipeline {
  ResamplePolicy resample;
  MaskSpec mask;
  std::size_t pad_len = 64;
  std::vector<std::size_t> icr_dts = {1, 2, 3, 5};
};

// One seeded draw of the stochastic input pipeline. Throws TooShort when the
// trajectory cannot produce a maskable sequence (callers skip those).
inline MaskedTrajectory prepare_sample(const Trajectory& traj, const SamplePipeline& pp,
                                       std::uint64_t seed) {
  Rng r(mix64(seed, 1));
  const std::size_t dt = pp.icr_dts[r.uniform_index(pp.icr_dts.size())];
  Trajectory t = dynamic_resample(traj, pp.resample);
  if (dt > 1 && t.points.size() > dt) t = thin_by_index(t, dt);
  if (t.points.size() > pp.pad_len) t.points.resize(pp.pad_len);
  if (t.points.size() < 4) throw TooShort("prepare_sample: sequence too short to mask");
  const MaskStrategy strategy = sample_strategy(pp.mask, mix64(seed, 2));
  return mask_with(t, strategy, pp.mask, mix64(seed, 3));
}

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelState state;  // parameters of the best validation epoch
  std::vector<EpochStats> history;
  std::vector<MaskedTrajectory> val_samples;  // the frozen validation draws
  double untrained_val_loss = 0.0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

inline double validation_loss(const ModelState& st, const std::vector<MaskedTrajectory>& val) {
  double sum = 0.0;
  for (const MaskedTrajectory& m : val) sum += masked_loss(forward_offsets(m, st), m);
  return sum / static_cast<double>(val.size());
}

using EpochCallback = std::function<void(const EpochStats&)>;

inline TrainResult train(const TrajectoryDataset& ds, const ModelConfig& cfg,
                         const ResamplePolicy& resample, const MaskSpec& mask,
                         const EpochCallback& on_epoch = nullptr) {
  validate_config(cfg);
  validate_policy(resample);
  validate_mask_spec(mask);
  const std::size_t n = ds.trajectories.size();
  if (n < 2) throw EmptyDataset("train: need at least 2 trajectories");

  const std::size_t val_count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n))), 1,
      n - 1);
  const std::size_t train_count = n - val_count;

  SamplePipeline pp{resample, mask, cfg.pad_len, cfg.icr_dts};

  // Validation transforms are frozen per trajectory so epoch losses compare
  // like with like.
  std::vector<MaskedTrajectory> val_samples;
  for (std::size_t i = train_count; i < n; ++i) {
    try {
      val_samples.push_back(
          prepare_sample(ds.trajectories[i], pp, mix64(cfg.seed, 0x76616cULL, i)));
    } catch (const TooShort&) {
    }
  }
  if (val_samples.empty()) throw EmptyDataset("train: no usable validation trajectories");

  ModelState state = init_model(cfg);
  ModelState grads = zeros_like(state);
  auto params = named_params(state);
  auto grad_views = named_params(static_cast<const ModelState&>(grads));
  Adam opt(params);

  TrainResult result;
  result.untrained_val_loss = validation_loss(state, val_samples);

  std::vector<std::size_t> order(train_count);
  for (std::size_t i = 0; i < train_count; ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  ModelState best_state = state;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix64(cfg.seed, 0x73687566ULL, epoch));
    shuffle_rng.shuffle(order);
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);

    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t start = 0; start < train_count; start += cfg.batch) {
      const std::size_t stop = std::min(start + cfg.batch, train_count);
      for (auto& [name, mat] : named_params(grads)) mat->zero();
      double batch_loss = 0.0;
      std::size_t batch_samples = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        try {
          const MaskedTrajectory m =
              prepare_sample(ds.trajectories[idx], pp, mix64(cfg.seed, epoch, idx));
          batch_loss += backprop(m, state, grads);
          ++batch_samples;
        } catch (const TooShort&) {
        }
      }
      if (batch_samples == 0) continue;
      if (!std::isfinite(batch_loss))
        throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting at " + std::to_string(start));
      const double inv = 1.0 / static_cast<double>(batch_samples);
      for (auto& [name, mat] : named_params(grads)) scale_inplace(*mat, inv);
      opt.step(params, grad_views, lr);
      epoch_loss += batch_loss;
      epoch_samples += batch_samples;
    }
    if (epoch_samples == 0) throw EmptyDataset("train: no usable training trajectories");

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    stats.val_loss = validation_loss(state, val_samples);
    if (!std::isfinite(stats.val_loss))
      throw NonFiniteLoss("train: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      best_state = state;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  result.state = std::move(best_state);
  result.val_samples = std::move(val_samples);
  result.best_epoch = best_epoch;
  result.best_val_loss = best_val;
  return result;
}

}  // namespace trajkit
