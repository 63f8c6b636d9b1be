#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/masking.hpp"
#include "trajkit/model.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/tensor.hpp"
#include "trajkit/train.hpp"

// Task adapters on top of the pretrained backbone. Recovery and prediction
// reuse the decoder unchanged (prediction is last-N masking with a 5-point
// horizon); classification mean-pools encoder outputs and feeds a 2-layer
// ReLU adapter, trainable with the backbone frozen or fine-tuned.

namespace trajkit {

inline constexpr std::size_t kPredictionHorizon = 5;

// Coordinates recovered for the hidden positions, in mask order.
inline std::vector<GeoPoint> recover_masked(const MaskedTrajectory& m, const ModelState& st) {
  const std::vector<GeoPoint> full = recover_coords(m, st);
  std::vector<GeoPoint> out;
  out.reserve(m.masked.size());
  for (std::size_t idx : m.masked) out.push_back(full[idx]);
  return out;
}

// Hides the last `horizon` points and reconstructs them; the prediction task
// is the recovery decoder pointed at the trajectory tail.
inline std::vector<GeoPoint> predict_future(const Trajectory& traj, const ModelState& st,
                                            std::size_t horizon = kPredictionHorizon) {
  const MaskedTrajectory m = mask_last_points(traj, horizon);
  return recover_masked(m, st);
}

struct ClassifierHead {
  Mat w1, b1;  // (d,d),(1,d)
  Mat w2, b2;  // (d,k),(1,k)
};

inline ClassifierHead init_classifier(std::size_t d, std::size_t k, std::uint64_t seed) {
  if (d == 0 || k == 0) throw Error("init_classifier: d and k must be positive");
  ClassifierHead h;
  h.w1 = Mat(d, d);
  h.b1 = Mat(1, d);
  h.w2 = Mat(d, k);
  h.b2 = Mat(1, k);
  Rng rng(seed);
  detail::init_uniform(h.w1, d, rng);
  detail::init_uniform(h.w2, d, rng);
  return h;
}

inline std::vector<std::pair<std::string, Mat*>> named_params(ClassifierHead& h) {
  return {{"cls.w1", &h.w1}, {"cls.b1", &h.b1}, {"cls.w2", &h.w2}, {"cls.b2", &h.b2}};
}

struct ClassifierCache {
  TokenizeCache tok;
  EmbeddingSequence tokens;
  std::vector<BlockCache> enc;
  Mat enc_out;
  Mat pool;    // (1,d)
  Mat h_pre;   // (1,d)
  Mat h_relu;  // (1,d)
};

// Encoder over the full, unmasked point sequence at positions 0..n-1.
inline Mat encode_full(const Trajectory& traj, const ModelState& st,
                       ClassifierCache* cache = nullptr) {
  ClassifierCache local;
  ClassifierCache& c = cache ? *cache : local;
  std::vector<std::size_t> positions(traj.points.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  c.tokens = tokenize_points(traj.points, std::move(positions), traj.points[0].pos, st, &c.tok);
  Mat z = c.tokens.h;
  c.enc.resize(st.enc.size());
  for (std::size_t l = 0; l < st.enc.size(); ++l)
    z = block_forward(z, c.tokens.positions, c.tokens.valid, st.cfg.heads, st.enc[l],
                      cache ? &c.enc[l] : nullptr);
  c.enc_out = z;
  return z;
}

inline std::vector<double> classify_logits(const Trajectory& traj, const ModelState& st,
                                           const ClassifierHead& head,
                                           ClassifierCache* cache = nullptr) {
  ClassifierCache local;
  ClassifierCache& c = cache ? *cache : local;
  encode_full(traj, st, &c);
  const std::size_t d = st.cfg.d;
  c.pool = Mat(1, d);
  const double inv = 1.0 / static_cast<double>(c.enc_out.rows);
  for (std::size_t i = 0; i < c.enc_out.rows; ++i)
    for (std::size_t j = 0; j < d; ++j) c.pool(0, j) += c.enc_out(i, j) * inv;
  c.h_pre = linear(c.pool, head.w1, head.b1);
  c.h_relu = c.h_pre;
  for (double& v : c.h_relu.a) v = std::max(v, 0.0);
  const Mat logits = linear(c.h_relu, head.w2, head.b2);
  return {logits.a.begin(), logits.a.end()};
}

namespace detail {

// Softmax cross-entropy; fills d_logits and returns the loss.
inline double softmax_xent(const std::vector<double>& logits, std::size_t label,
                           std::vector<double>& d_logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - mx);
  d_logits.resize(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double p = std::exp(logits[j] - mx) / denom;
    d_logits[j] = p - (j == label ? 1.0 : 0.0);
  }
  return std::log(denom) - (logits[label] - mx);
}

}  // namespace detail

struct LabeledTrajectory {
  Trajectory traj;
  std::size_t label = 0;
};

// Trains the classification adapter with cross-entropy. With
// freeze_backbone the ModelState is bit-untouched; otherwise encoder,
// tokenizer, and head all receive Adam updates. Returns per-epoch mean loss.
inline std::vector<double> train_classifier(ModelState& st, ClassifierHead& head,
                                            const std::vector<LabeledTrajectory>& data,
                                            std::size_t k, bool freeze_backbone,
                                            std::size_t epochs, double lr,
                                            std::uint64_t seed) {
  if (data.empty()) throw EmptyDataset("train_classifier: empty dataset");
  for (const auto& item : data)
    if (item.label >= k) throw Error("train_classifier: label out of range");

  // Backbone gradients flow through the encoder only; decoder-side
  // parameters are listed for shape symmetry and simply stay zero.
  ModelState grads = zeros_like(st);
  ClassifierHead head_grads = head;
  for (auto& [name, m] : named_params(head_grads)) m->zero();

  std::vector<std::pair<std::string, Mat*>> params = named_params(head);
  std::vector<std::pair<std::string, Mat*>> grad_ptrs = named_params(head_grads);
  if (!freeze_backbone) {
    for (auto& [name, m] : named_params(st)) params.emplace_back(name, m);
    for (auto& [name, m] : named_params(grads)) grad_ptrs.emplace_back(name, m);
  }
  std::vector<std::pair<std::string, const Mat*>> grad_views;
  grad_views.reserve(grad_ptrs.size());
  for (auto& [name, m] : grad_ptrs) grad_views.emplace_back(name, m);

  Adam opt(params);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(mix64(seed, 0x636c73ULL, epoch));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      for (auto& [name, m] : grad_ptrs) m->zero();

      ClassifierCache c;
      std::vector<double> logits = classify_logits(data[idx].traj, st, head, &c);
      std::vector<double> d_logits;
      epoch_loss += detail::softmax_xent(logits, data[idx].label, d_logits);

      Mat d_logits_m(1, d_logits.size());
      d_logits_m.a = d_logits;
      add_matmul_tn(head_grads.w2, c.h_relu, d_logits_m);
      add_colsum(head_grads.b2, d_logits_m);
      Mat d_relu = matmul_nt(d_logits_m, head.w2);
      for (std::size_t j = 0; j < d_relu.a.size(); ++j)
        if (c.h_pre.a[j] <= 0.0) d_relu.a[j] = 0.0;
      add_matmul_tn(head_grads.w1, c.pool, d_relu);
      add_colsum(head_grads.b1, d_relu);

      if (!freeze_backbone) {
        Mat d_pool = matmul_nt(d_relu, head.w1);
        Mat d_enc(c.enc_out.rows, c.enc_out.cols);
        const double inv = 1.0 / static_cast<double>(c.enc_out.rows);
        for (std::size_t i = 0; i < d_enc.rows; ++i)
          for (std::size_t j = 0; j < d_enc.cols; ++j) d_enc(i, j) = d_pool(0, j) * inv;
        for (std::size_t l = st.enc.size(); l-- > 0;)
          d_enc = block_backward(std::move(d_enc), st.enc[l], c.enc[l], st.cfg.heads,
                                 grads.enc[l]);
        tokenize_backward(d_enc, c.tok, grads);
      }

      opt.step(params, grad_views, lr);
    }
    history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return history;
}

}  // namespace trajkit
