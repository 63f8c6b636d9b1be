#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "trajkit/errors.hpp"
#include "trajkit/masking.hpp"
#include "trajkit/rng.hpp"
#include "trajkit/tensor.hpp"
#include "trajkit/trajectory.hpp"

// Masked-reconstruction encoder-decoder over trajectory tokens.
//
// Tokens are normalized coordinate offsets relative to the first point plus
// a linear embedding of the time gap to the previous token. Blocks are
// Pre-LN: x + Attn(LN(x)) then x + FFN(LN(x)), multi-head attention with
// rotary position encoding applied to queries and keys at each token's
// original trajectory index (not its compacted rank among visible tokens).
// The decoder sees the full-length sequence where hidden positions carry a
// learned mask token; the loss is mean squared error over the masked
// positions, in normalized-offset space.
//
// Backpropagation is written out by hand; determinism is part of the
// contract, so everything runs single-threaded in a fixed order.

namespace trajkit {

struct ModelConfig {
  std::size_t d = 128;       // embedding width
  std::size_t enc_blocks = 8;
  std::size_t dec_blocks = 4;
  std::size_t heads = 4;
  std::size_t pad_len = 200;  // sequences longer than this are tail-truncated
  std::size_t max_len = 512;
  std::size_t ffn_mult = 4;   // hidden width of the feed-forward = ffn_mult * d
  double lr = 1e-3;
  std::size_t batch = 1024;
  std::size_t epochs = 200;
  std::size_t patience = 10;     // early stopping, in epochs
  double val_fraction = 0.1;     // tail share of the dataset held out
  std::vector<std::size_t> icr_dts = {1, 2, 3, 5};  // per-sample interval draws
  std::uint64_t seed = 42;
};

// Small configuration that trains in minutes on one CPU core. Patience
// matches the epoch budget: at batch 32 the validation loss is noisy enough
// that the default-10 window regularly fires mid-descent.
inline ModelConfig desk_config() {
  ModelConfig c;
  c.d = 32;
  c.enc_blocks = 2;
  c.dec_blocks = 2;
  c.heads = 2;
  c.pad_len = 64;
  c.batch = 32;
  c.epochs = 50;
  c.patience = 50;
  return c;
}

inline void validate_config(const ModelConfig& c) {
  if (c.d == 0 || c.heads == 0 || c.d % (2 * c.heads) != 0)
    throw Error("ModelConfig: d must be a positive multiple of 2*heads");
  if (c.pad_len < 4 || c.pad_len > c.max_len)
    throw Error("ModelConfig: need 4 <= pad_len <= max_len");
  if (c.enc_blocks == 0 || c.dec_blocks == 0 || c.ffn_mult == 0 || c.batch == 0 ||
      c.epochs == 0 || c.icr_dts.empty())
    throw Error("ModelConfig: counts must be positive");
  if (!(c.lr > 0.0) || !(c.val_fraction > 0.0 && c.val_fraction < 1.0))
    throw Error("ModelConfig: lr must be positive and val_fraction in (0,1)");
}

// Time gaps are clipped to this many seconds before embedding; unbounded
// gaps would let one outlier dominate the temporal linear map.
inline constexpr double kDtClipMaxS = 60.0;

struct BlockParams {
  Mat ln1_g, ln1_b;
  Mat wq, bq, wk, bk, wv, bv;
  Mat wo, bo;
  Mat ln2_g, ln2_b;
  Mat w1, b1, w2, b2;
};

struct ModelState {
  ModelConfig cfg;
  Mat w_s;            // (2,d) spatial map of normalized offsets, no bias
  Mat w_t, b_t;       // (1,d),(1,d) temporal map of clipped time gaps
  Mat h_mask;         // (1,d) learned token standing in for hidden positions
  Mat ln_f_g, ln_f_b; // (1,d) final norm; the head reads a normalized stream
  Mat w_out, b_out;   // (d,2),(1,2) per-position offset head
  std::vector<BlockParams> enc, dec;
};

namespace detail {

template <class BP, class F>
void block_params_for_each(BP& b, const std::string& prefix, F&& f) {
  f(prefix + ".ln1_g", b.ln1_g);
  f(prefix + ".ln1_b", b.ln1_b);
  f(prefix + ".wq", b.wq);
  f(prefix + ".bq", b.bq);
  f(prefix + ".wk", b.wk);
  f(prefix + ".bk", b.bk);
  f(prefix + ".wv", b.wv);
  f(prefix + ".bv", b.bv);
  f(prefix + ".wo", b.wo);
  f(prefix + ".bo", b.bo);
  f(prefix + ".ln2_g", b.ln2_g);
  f(prefix + ".ln2_b", b.ln2_b);
  f(prefix + ".w1", b.w1);
  f(prefix + ".b1", b.b1);
  f(prefix + ".w2", b.w2);
  f(prefix + ".b2", b.b2);
}

}  // namespace detail

// Visits every parameter as (name, Mat&) in a fixed order; the same order
// drives initialization, Adam moments, checkpoints, and gradient checks.
template <class State, class F>
void for_each_param(State& st, F&& f) {
  f(std::string("w_s"), st.w_s);
  f(std::string("w_t"), st.w_t);
  f(std::string("b_t"), st.b_t);
  f(std::string("h_mask"), st.h_mask);
  f(std::string("ln_f_g"), st.ln_f_g);
  f(std::string("ln_f_b"), st.ln_f_b);
  f(std::string("w_out"), st.w_out);
  f(std::string("b_out"), st.b_out);
  for (std::size_t i = 0; i < st.enc.size(); ++i)
    detail::block_params_for_each(st.enc[i], "enc" + std::to_string(i), f);
  for (std::size_t i = 0; i < st.dec.size(); ++i)
    detail::block_params_for_each(st.dec[i], "dec" + std::to_string(i), f);
}

inline std::vector<std::pair<std::string, Mat*>> named_params(ModelState& st) {
  std::vector<std::pair<std::string, Mat*>> out;
  for_each_param(st, [&out](const std::string& name, Mat& m) { out.emplace_back(name, &m); });
  return out;
}

inline std::vector<std::pair<std::string, const Mat*>> named_params(const ModelState& st) {
  std::vector<std::pair<std::string, const Mat*>> out;
  for_each_param(st, [&out](const std::string& name, const Mat& m) {
    out.emplace_back(name, &m);
  });
  return out;
}

inline std::size_t param_count(const ModelState& st) {
  std::size_t n = 0;
  for (const auto& [name, m] : named_params(st)) n += m->size();
  return n;
}

namespace detail {

inline void init_uniform(Mat& w, std::size_t fan_in, Rng& rng, double scale = 1.0) {
  const double limit = scale / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.a) v = rng.uniform(-limit, limit);
}

inline BlockParams make_block(std::size_t d, std::size_t f) {
  BlockParams b;
  b.ln1_g = Mat(1, d);
  b.ln1_b = Mat(1, d);
  b.wq = Mat(d, d);
  b.bq = Mat(1, d);
  b.wk = Mat(d, d);
  b.bk = Mat(1, d);
  b.wv = Mat(d, d);
  b.bv = Mat(1, d);
  b.wo = Mat(d, d);
  b.bo = Mat(1, d);
  b.ln2_g = Mat(1, d);
  b.ln2_b = Mat(1, d);
  b.w1 = Mat(d, f);
  b.b1 = Mat(1, f);
  b.w2 = Mat(f, d);
  b.b2 = Mat(1, d);
  return b;
}

inline void init_block(BlockParams& b, std::size_t d, std::size_t f, Rng& rng) {
  std::fill(b.ln1_g.a.begin(), b.ln1_g.a.end(), 1.0);
  std::fill(b.ln2_g.a.begin(), b.ln2_g.a.end(), 1.0);
  init_uniform(b.wq, d, rng);
  init_uniform(b.wk, d, rng);
  init_uniform(b.wv, d, rng);
  init_uniform(b.wo, d, rng);
  init_uniform(b.w1, d, rng);
  init_uniform(b.w2, f, rng);
}

}  // namespace detail

// Deterministic initialization: uniform(+-1/sqrt(fan_in)) weights, zero
// biases, unit LayerNorm gains, N(0, 0.02) mask token. One seeded stream
// consumed in the for_each_param order.
//
// The tokenizer maps are scale-aware. Fan-in limits assume unit-variance
// inputs, but the inputs here are anchor-relative degrees (a kilometer-scale
// track spans ~1e-2 deg) against clipped second-scale time gaps; plain fan-in
// would start the spatial pathway two orders weaker than the temporal one at
// the first LayerNorm and leave it gradient-starved. w_s is widened and w_out
// narrowed by the characteristic offset so embeddings mix both pathways at
// comparable magnitude and the head starts at degree scale.
inline constexpr double kCharOffsetDeg = 1e-2;

inline ModelState init_model(const ModelConfig& cfg) {
  validate_config(cfg);
  const std::size_t d = cfg.d;
  const std::size_t f = cfg.ffn_mult * d;
  ModelState st;
  st.cfg = cfg;
  st.w_s = Mat(2, d);
  st.w_t = Mat(1, d);
  st.b_t = Mat(1, d);
  st.h_mask = Mat(1, d);
  st.ln_f_g = Mat(1, d);
  st.ln_f_b = Mat(1, d);
  st.w_out = Mat(d, 2);
  st.b_out = Mat(1, 2);
  std::fill(st.ln_f_g.a.begin(), st.ln_f_g.a.end(), 1.0);
  st.enc.reserve(cfg.enc_blocks);
  st.dec.reserve(cfg.dec_blocks);
  for (std::size_t i = 0; i < cfg.enc_blocks; ++i) st.enc.push_back(detail::make_block(d, f));
  for (std::size_t i = 0; i < cfg.dec_blocks; ++i) st.dec.push_back(detail::make_block(d, f));

  Rng rng(cfg.seed);
  detail::init_uniform(st.w_s, 2, rng, 1.0 / kCharOffsetDeg);
  detail::init_uniform(st.w_t, 1, rng);
  for (double& v : st.h_mask.a) v = rng.normal(0.0, 0.02);
  detail::init_uniform(st.w_out, d, rng, kCharOffsetDeg);
  for (auto& b : st.enc) detail::init_block(b, d, f, rng);
  for (auto& b : st.dec) detail::init_block(b, d, f, rng);
  return st;
}

// Same shapes as st with every parameter zero; gradient/moment container.
inline ModelState zeros_like(const ModelState& st) {
  ModelState g = st;
  for (auto& [name, m] : named_params(g)) m->zero();
  return g;
}

// ---------------------------------------------------------------------------
// Rotary position encoding

namespace detail {

// Rotates consecutive pairs of v[0..len) by angle pos / 10000^(2k/len);
// inverse applies the transpose (rotation by the negative angle).
inline void rope_apply(double* v, std::size_t len, double pos, bool inverse) {
  for (std::size_t k = 0; 2 * k + 1 < len; ++k) {
    const double theta =
        pos / std::pow(10000.0, 2.0 * static_cast<double>(k) / static_cast<double>(len));
    const double c = std::cos(theta);
    const double s = inverse ? -std::sin(theta) : std::sin(theta);
    const double a = v[2 * k];
    const double b = v[2 * k + 1];
    v[2 * k] = a * c - b * s;
    v[2 * k + 1] = a * s + b * c;
  }
}

}  // namespace detail

// Norm-preserving rotation of dimension pairs (2k, 2k+1) by the angle
// i / 10000^(2k/d), with d the vector length. Inside attention this is
// applied per head, so d there is the head dimension.
inline std::vector<double> rope_rotate(std::vector<double> v, std::size_t i) {
  if (v.size() % 2 != 0) throw Error("rope_rotate: dimension must be even");
  detail::rope_apply(v.data(), v.size(), static_cast<double>(i), false);
  return v;
}

// ---------------------------------------------------------------------------
// Primitive layers

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline constexpr double kLnEps = 1e-5;

struct LnCache {
  Mat xhat;
  std::vector<double> rstd;
};

inline Mat ln_forward(const Mat& x, const Mat& gamma, const Mat& beta, LnCache& c) {
  const std::size_t D = x.cols;
  Mat y(x.rows, D);
  c.xhat = Mat(x.rows, D);
  c.rstd.assign(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double mu = 0.0;
    for (std::size_t j = 0; j < D; ++j) mu += xi[j];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t j = 0; j < D; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(D);
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    c.rstd[i] = rstd;
    double* xh = c.xhat.row(i);
    double* yi = y.row(i);
    for (std::size_t j = 0; j < D; ++j) {
      xh[j] = (xi[j] - mu) * rstd;
      yi[j] = gamma(0, j) * xh[j] + beta(0, j);
    }
  }
  return y;
}

inline Mat ln_backward(const Mat& dy, const Mat& gamma, const LnCache& c, Mat& dgamma,
                       Mat& dbeta) {
  const std::size_t D = dy.cols;
  Mat dx(dy.rows, D);
  for (std::size_t i = 0; i < dy.rows; ++i) {
    const double* dyi = dy.row(i);
    const double* xh = c.xhat.row(i);
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
      const double dxhat = dyi[j] * gamma(0, j);
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xh[j];
      dgamma(0, j) += dyi[j] * xh[j];
      dbeta(0, j) += dyi[j];
    }
    const double inv_d = 1.0 / static_cast<double>(D);
    double* dxi = dx.row(i);
    for (std::size_t j = 0; j < D; ++j) {
      const double dxhat = dyi[j] * gamma(0, j);
      dxi[j] = c.rstd[i] * (dxhat - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
    }
  }
  return dx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Token embedding

// Sequence of d-dimensional token vectors. Rows at index >= valid are
// padding: zero vectors that attention must not read and losses must skip.
struct EmbeddingSequence {
  Mat h;
  std::vector<std::size_t> positions;  // original trajectory index per row
  std::size_t valid = 0;
};

struct TokenizeCache {
  Mat xy;  // (S,2) offsets relative to the anchor
  Mat dt;  // (S,1) clipped time gaps
};

// Embeds points as W_s-projected offsets from `anchor` plus the linear map
// of the time gap to the previous point (gap 0 for the first row).
inline EmbeddingSequence tokenize_points(const std::vector<TrajPoint>& pts,
                                         std::vector<std::size_t> positions,
                                         const GeoPoint& anchor, const ModelState& st,
                                         TokenizeCache* cache = nullptr) {
  if (pts.size() < 2) throw TooShort("tokenize: need at least 2 points");
  if (positions.size() != pts.size()) throw Error("tokenize: positions size mismatch");
  const std::size_t S = pts.size();
  TokenizeCache local;
  TokenizeCache& c = cache ? *cache : local;
  c.xy = Mat(S, 2);
  c.dt = Mat(S, 1);
  for (std::size_t i = 0; i < S; ++i) {
    c.xy(i, 0) = pts[i].pos.lng - anchor.lng;
    c.xy(i, 1) = pts[i].pos.lat - anchor.lat;
    c.dt(i, 0) =
        i == 0 ? 0.0 : std::clamp(pts[i].t - pts[i - 1].t, 0.0, kDtClipMaxS);
  }
  EmbeddingSequence seq;
  seq.h = matmul(c.xy, st.w_s);
  const Mat temporal = linear(c.dt, st.w_t, st.b_t);
  add_inplace(seq.h, temporal);
  seq.positions = std::move(positions);
  seq.valid = S;
  return seq;
}

inline EmbeddingSequence tokenize(const MaskedTrajectory& m, const ModelState& st,
                                  TokenizeCache* cache = nullptr) {
  if (m.visible.empty() || m.visible[0] != 0)
    throw Error("tokenize: first point must be visible");
  std::vector<TrajPoint> pts;
  pts.reserve(m.visible.size());
  for (std::size_t idx : m.visible) pts.push_back(m.base.points[idx]);
  return tokenize_points(pts, m.visible, m.base.points[0].pos, st, cache);
}

// Gradient of the embedding w.r.t. W_s, W_t, b_t (inputs get no gradient).
inline void tokenize_backward(const Mat& dh, const TokenizeCache& c, ModelState& g) {
  add_matmul_tn(g.w_s, c.xy, dh);
  add_matmul_tn(g.w_t, c.dt, dh);
  add_colsum(g.b_t, dh);
}

// ---------------------------------------------------------------------------
// Attention block

struct BlockCache {
  std::size_t valid = 0;
  std::vector<std::size_t> positions;
  detail::LnCache ln1;
  Mat u;                    // LN1 output
  Mat q, k, v;              // projections before rotation
  Mat q_rot, k_rot;
  std::vector<Mat> logits;  // per head, scaled pre-softmax scores
  std::vector<Mat> attn;    // per head, softmax rows (zero at padding)
  Mat ctx;                  // concatenated head outputs
  Mat x_mid;                // after the attention residual
  detail::LnCache ln2;
  Mat u2;                   // LN2 output
  Mat ff_pre, ff_act;
};

// Pre-LN block: x + Attn(LN(x)), then x + FFN(LN(x)) with exact-erf GELU.
// RoPE rotates query/key head slices at each row's original position.
// Rows at index >= valid contribute nothing: their keys are masked out of
// every softmax and their own outputs are forced to zero.
inline Mat block_forward(const Mat& x, const std::vector<std::size_t>& positions,
                         std::size_t valid, std::size_t heads, const BlockParams& p,
                         BlockCache* cache) {
  const std::size_t S = x.rows;
  const std::size_t d = x.cols;
  if (positions.size() != S || valid > S) throw Error("block_forward: bad positions/valid");
  if (d % heads != 0) throw Error("block_forward: d not divisible by heads");
  const std::size_t dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  c.valid = valid;
  c.positions = positions;

  c.u = detail::ln_forward(x, p.ln1_g, p.ln1_b, c.ln1);
  c.q = linear(c.u, p.wq, p.bq);
  c.k = linear(c.u, p.wk, p.bk);
  c.v = linear(c.u, p.wv, p.bv);
  c.q_rot = c.q;
  c.k_rot = c.k;
  for (std::size_t i = 0; i < valid; ++i) {
    const double pos = static_cast<double>(positions[i]);
    for (std::size_t h = 0; h < heads; ++h) {
      detail::rope_apply(c.q_rot.row(i) + h * dh, dh, pos, false);
      detail::rope_apply(c.k_rot.row(i) + h * dh, dh, pos, false);
    }
  }

  c.logits.assign(heads, Mat(S, S));
  c.attn.assign(heads, Mat(S, S));
  c.ctx = Mat(S, d);
  for (std::size_t h = 0; h < heads; ++h) {
    Mat& L = c.logits[h];
    Mat& A = c.attn[h];
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < valid; ++i) {
      const double* qi = c.q_rot.row(i) + off;
      double row_max = -1e300;
      for (std::size_t j = 0; j < valid; ++j) {
        const double* kj = c.k_rot.row(j) + off;
        double dot = 0.0;
        for (std::size_t t = 0; t < dh; ++t) dot += qi[t] * kj[t];
        L(i, j) = dot * inv_sqrt_dh;
        row_max = std::max(row_max, L(i, j));
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < valid; ++j) {
        A(i, j) = std::exp(L(i, j) - row_max);
        denom += A(i, j);
      }
      double* ctx_i = c.ctx.row(i) + off;
      for (std::size_t j = 0; j < valid; ++j) {
        A(i, j) /= denom;
        const double* vj = c.v.row(j) + off;
        for (std::size_t t = 0; t < dh; ++t) ctx_i[t] += A(i, j) * vj[t];
      }
    }
  }

  Mat attn_out = linear(c.ctx, p.wo, p.bo);
  for (std::size_t i = valid; i < S; ++i)
    for (std::size_t j = 0; j < d; ++j) attn_out(i, j) = 0.0;

  c.x_mid = x;
  add_inplace(c.x_mid, attn_out);

  c.u2 = detail::ln_forward(c.x_mid, p.ln2_g, p.ln2_b, c.ln2);
  c.ff_pre = linear(c.u2, p.w1, p.b1);
  c.ff_act = c.ff_pre;
  for (double& vv : c.ff_act.a) vv = detail::gelu(vv);
  Mat ffn_out = linear(c.ff_act, p.w2, p.b2);
  for (std::size_t i = valid; i < S; ++i)
    for (std::size_t j = 0; j < d; ++j) ffn_out(i, j) = 0.0;

  Mat out = c.x_mid;
  add_inplace(out, ffn_out);
  return out;
}

// Exact reverse of block_forward; accumulates parameter gradients into g and
// returns the gradient w.r.t. the block input.
inline Mat block_backward(Mat d_out, const BlockParams& p, const BlockCache& c,
                          std::size_t heads, BlockParams& g) {
  const std::size_t S = d_out.rows;
  const std::size_t d = d_out.cols;
  const std::size_t dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t valid = c.valid;

  for (std::size_t i = valid; i < S; ++i)
    for (std::size_t j = 0; j < d; ++j) d_out(i, j) = 0.0;

  // FFN branch: out = x_mid + mask(W2 gelu(W1 u2 + b1) + b2)
  Mat d_ffn_out = d_out;  // pad rows already zero
  add_matmul_tn(g.w2, c.ff_act, d_ffn_out);
  add_colsum(g.b2, d_ffn_out);
  Mat d_act = matmul_nt(d_ffn_out, p.w2);
  Mat d_pre = d_act;
  for (std::size_t idx = 0; idx < d_pre.a.size(); ++idx)
    d_pre.a[idx] *= detail::gelu_grad(c.ff_pre.a[idx]);
  add_matmul_tn(g.w1, c.u2, d_pre);
  add_colsum(g.b1, d_pre);
  Mat d_u2 = matmul_nt(d_pre, p.w1);
  Mat d_x_mid = detail::ln_backward(d_u2, p.ln2_g, c.ln2, g.ln2_g, g.ln2_b);
  add_inplace(d_x_mid, d_out);  // residual path

  // Attention branch: x_mid = x + mask(Wo ctx + bo)
  Mat d_attn_out = d_x_mid;
  for (std::size_t i = valid; i < S; ++i)
    for (std::size_t j = 0; j < d; ++j) d_attn_out(i, j) = 0.0;
  add_matmul_tn(g.wo, c.ctx, d_attn_out);
  add_colsum(g.bo, d_attn_out);
  Mat d_ctx = matmul_nt(d_attn_out, p.wo);

  Mat d_q_rot(S, d), d_k_rot(S, d), d_v(S, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const Mat& A = c.attn[h];
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < valid; ++i) {
      const double* d_ctx_i = d_ctx.row(i) + off;
      // dA and the softmax Jacobian, row by row
      double inner = 0.0;  // sum_j dA_ij A_ij
      std::vector<double> dA(valid);
      for (std::size_t j = 0; j < valid; ++j) {
        const double* vj = c.v.row(j) + off;
        double acc = 0.0;
        for (std::size_t t = 0; t < dh; ++t) acc += d_ctx_i[t] * vj[t];
        dA[j] = acc;
        inner += acc * A(i, j);
        double* d_vj = d_v.row(j) + off;
        for (std::size_t t = 0; t < dh; ++t) d_vj[t] += A(i, j) * d_ctx_i[t];
      }
      const double* qi = c.q_rot.row(i) + off;
      double* d_qi = d_q_rot.row(i) + off;
      for (std::size_t j = 0; j < valid; ++j) {
        const double d_logit = A(i, j) * (dA[j] - inner);
        const double scaled = d_logit * inv_sqrt_dh;
        const double* kj = c.k_rot.row(j) + off;
        double* d_kj = d_k_rot.row(j) + off;
        for (std::size_t t = 0; t < dh; ++t) {
          d_qi[t] += scaled * kj[t];
          d_kj[t] += scaled * qi[t];
        }
      }
    }
  }

  // Undo the rotation: gradients rotate by the negative angle.
  for (std::size_t i = 0; i < valid; ++i) {
    const double pos = static_cast<double>(c.positions[i]);
    for (std::size_t h = 0; h < heads; ++h) {
      detail::rope_apply(d_q_rot.row(i) + h * dh, dh, pos, true);
      detail::rope_apply(d_k_rot.row(i) + h * dh, dh, pos, true);
    }
  }

  add_matmul_tn(g.wq, c.u, d_q_rot);
  add_colsum(g.bq, d_q_rot);
  add_matmul_tn(g.wk, c.u, d_k_rot);
  add_colsum(g.bk, d_k_rot);
  add_matmul_tn(g.wv, c.u, d_v);
  add_colsum(g.bv, d_v);

  Mat d_u = matmul_nt(d_q_rot, p.wq);
  add_inplace(d_u, matmul_nt(d_k_rot, p.wk));
  add_inplace(d_u, matmul_nt(d_v, p.wv));

  Mat d_x = detail::ln_backward(d_u, p.ln1_g, c.ln1, g.ln1_g, g.ln1_b);
  add_inplace(d_x, d_x_mid);  // residual path
  return d_x;
}

// ---------------------------------------------------------------------------
// Encoder / decoder pipeline

struct ForwardCache {
  TokenizeCache tok;
  EmbeddingSequence tokens;
  std::vector<BlockCache> enc;
  Mat z_enc;
  Mat z_dec;
  std::vector<std::size_t> dec_positions;
  std::vector<BlockCache> dec;
  Mat dec_out;
  detail::LnCache lnf;
  Mat dec_norm;
  Mat pred;  // (n,2) normalized offsets
};

// Runs the encoder over the visible points; one output row per visible point.
inline Mat encode(const MaskedTrajectory& m, const ModelState& st, ForwardCache* fc = nullptr) {
  ForwardCache local;
  ForwardCache& c = fc ? *fc : local;
  c.tokens = tokenize(m, st, &c.tok);
  Mat z = c.tokens.h;
  c.enc.resize(st.enc.size());
  for (std::size_t l = 0; l < st.enc.size(); ++l)
    z = block_forward(z, c.tokens.positions, c.tokens.valid, st.cfg.heads, st.enc[l],
                      fc ? &c.enc[l] : nullptr);
  c.z_enc = z;
  return z;
}

// Places row jj of z_enc at output row index_map[jj]; every unclaimed output
// row gets the mask token. Pure placement: permuting z_enc rows and index_map
// together yields the same output. index_map must be injective into [0, n).
inline Mat place_rows(const Mat& z_enc, const std::vector<std::size_t>& index_map, std::size_t n,
                      const Mat& h_mask) {
  if (z_enc.rows != index_map.size() || z_enc.cols != h_mask.cols || index_map.size() > n)
    throw IndexMapMismatch("place_rows: index map inconsistent with input rows");
  Mat z(n, z_enc.cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < z.cols; ++j) z(i, j) = h_mask(0, j);
  std::vector<char> claimed(n, 0);
  for (std::size_t jj = 0; jj < index_map.size(); ++jj) {
    const std::size_t idx = index_map[jj];
    if (idx >= n || claimed[idx])
      throw IndexMapMismatch("place_rows: index map out of range or duplicated");
    claimed[idx] = 1;
    for (std::size_t j = 0; j < z.cols; ++j) z(idx, j) = z_enc(jj, j);
  }
  return z;
}

// Places encoded visible rows at their original indices and the learned mask
// token everywhere else; output has one row per point of the base trajectory.
inline Mat reorder_merge(const Mat& z_enc, const MaskedTrajectory& m, const ModelState& st) {
  const std::size_t n = m.base.points.size();
  if (m.visible.size() + m.masked.size() != n)
    throw IndexMapMismatch("reorder_merge: index map inconsistent with trajectory length");
  return place_rows(z_enc, m.visible, n, st.h_mask);
}

// Decoder over the merged full-length sequence (positions 0..n-1), then a
// final norm and the per-position linear head. The Pre-LN residual stream is
// unnormalized on exit, so without this norm the head's effective gain would
// vary row by row. Returns normalized offsets, one row per point.
inline Mat decode(const Mat& z_dec, const ModelState& st, ForwardCache* fc = nullptr) {
  ForwardCache local;
  ForwardCache& c = fc ? *fc : local;
  const std::size_t n = z_dec.rows;
  c.dec_positions.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.dec_positions[i] = i;
  Mat z = z_dec;
  c.dec.resize(st.dec.size());
  for (std::size_t l = 0; l < st.dec.size(); ++l)
    z = block_forward(z, c.dec_positions, n, st.cfg.heads, st.dec[l],
                      fc ? &c.dec[l] : nullptr);
  c.dec_out = z;
  c.dec_norm = detail::ln_forward(z, st.ln_f_g, st.ln_f_b, c.lnf);
  c.pred = linear(c.dec_norm, st.w_out, st.b_out);
  return c.pred;
}

inline Mat forward_offsets(const MaskedTrajectory& m, const ModelState& st,
                           ForwardCache* fc = nullptr) {
  ForwardCache local;
  ForwardCache& c = fc ? *fc : local;
  encode(m, st, &c);
  c.z_dec = reorder_merge(c.z_enc, m, st);
  return decode(c.z_dec, st, &c);
}

/// Normalized-offset targets: the true offsets of every point from the anchor.
inline Mat offset_targets(const MaskedTrajectory& m) {
  const GeoPoint anchor = m.base.points[0].pos;
  Mat t(m.base.points.size(), 2);
  for (std::size_t i = 0; i < m.base.points.size(); ++i) {
    t(i, 0) = m.base.points[i].pos.lng - anchor.lng;
    t(i, 1) = m.base.points[i].pos.lat - anchor.lat;
  }
  return t;
}

// Mean squared error over the masked positions only, in offset space.
inline double masked_loss(const Mat& pred, const MaskedTrajectory& m) {
  if (pred.rows != m.base.points.size() || pred.cols != 2)
    throw Error("masked_loss: prediction shape mismatch");
  if (m.masked.empty()) throw Error("masked_loss: empty mask");
  const Mat targets = offset_targets(m);
  double loss = 0.0;
  for (std::size_t idx : m.masked) {
    const double ex = pred(idx, 0) - targets(idx, 0);
    const double ey = pred(idx, 1) - targets(idx, 1);
    loss += ex * ex + ey * ey;
  }
  return loss / static_cast<double>(m.masked.size());
}

// Forward + full manual backward for one sample; accumulates parameter
// gradients into g (callers zero or average g as they see fit) and returns
// the sample loss.
inline double backprop(const MaskedTrajectory& m, const ModelState& st, ModelState& g) {
  ForwardCache fc;
  const Mat pred = forward_offsets(m, st, &fc);
  const double loss = masked_loss(pred, m);

  const Mat targets = offset_targets(m);
  Mat d_pred(pred.rows, 2);
  const double scale = 2.0 / static_cast<double>(m.masked.size());
  for (std::size_t idx : m.masked) {
    d_pred(idx, 0) = scale * (pred(idx, 0) - targets(idx, 0));
    d_pred(idx, 1) = scale * (pred(idx, 1) - targets(idx, 1));
  }

  add_matmul_tn(g.w_out, fc.dec_norm, d_pred);
  add_colsum(g.b_out, d_pred);
  Mat d = matmul_nt(d_pred, st.w_out);
  d = detail::ln_backward(d, st.ln_f_g, fc.lnf, g.ln_f_g, g.ln_f_b);
  for (std::size_t l = st.dec.size(); l-- > 0;)
    d = block_backward(std::move(d), st.dec[l], fc.dec[l], st.cfg.heads, g.dec[l]);

  // Split the merged sequence gradient back into encoder rows / mask token.
  Mat d_enc(fc.z_enc.rows, fc.z_enc.cols);
  std::vector<bool> is_visible(m.base.points.size(), false);
  for (std::size_t jj = 0; jj < m.visible.size(); ++jj) {
    is_visible[m.visible[jj]] = true;
    for (std::size_t j = 0; j < d.cols; ++j) d_enc(jj, j) = d(m.visible[jj], j);
  }
  for (std::size_t i = 0; i < m.base.points.size(); ++i)
    if (!is_visible[i])
      for (std::size_t j = 0; j < d.cols; ++j) g.h_mask(0, j) += d(i, j);

  for (std::size_t l = st.enc.size(); l-- > 0;)
    d_enc = block_backward(std::move(d_enc), st.enc[l], fc.enc[l], st.cfg.heads, g.enc[l]);
  tokenize_backward(d_enc, fc.tok, g);
  return loss;
}

// Mean loss and averaged gradients over a batch of masked samples.
inline double batch_gradients(const std::vector<MaskedTrajectory>& batch, const ModelState& st,
                              ModelState& g) {
  if (batch.empty()) throw EmptyDataset("batch_gradients: empty batch");
  double loss = 0.0;
  for (const MaskedTrajectory& m : batch) loss += backprop(m, st, g);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& [name, mat] : named_params(g)) scale_inplace(*mat, inv);
  return loss * inv;
}

// De-normalized coordinate predictions for every position of the base
// trajectory (offsets plus the anchor point).
inline std::vector<GeoPoint> recover_coords(const MaskedTrajectory& m, const ModelState& st) {
  const Mat pred = forward_offsets(m, st);
  const GeoPoint anchor = m.base.points[0].pos;
  std::vector<GeoPoint> out(pred.rows);
  for (std::size_t i = 0; i < pred.rows; ++i)
    out[i] = {anchor.lng + pred(i, 0), anchor.lat + pred(i, 1)};
  return out;
}

}  // namespace trajkit
