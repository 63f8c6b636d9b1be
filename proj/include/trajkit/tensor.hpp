#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "trajkit/errors.hpp"

// Row-major dense matrix of doubles plus the handful of products the model
// needs. Everything is straightforward loop code: sequence lengths are a few
// hundred at most and determinism matters more than throughput here.

namespace trajkit {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }

  std::size_t size() const { return a.size(); }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  friend bool operator==(const Mat&, const Mat&) = default;
};

inline Mat zeros_like(const Mat& m) { return Mat(m.rows, m.cols); }

// C = A * B
inline Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows) throw Error("matmul: inner dimensions differ");
  Mat C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = B.row(k);
      for (std::size_t j = 0; j < B.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return C;
}

// C += A^T * B  (A: S x m, B: S x n, C: m x n); the parameter-gradient shape.
inline void add_matmul_tn(Mat& C, const Mat& A, const Mat& B) {
  if (A.rows != B.rows || C.rows != A.cols || C.cols != B.cols)
    throw Error("add_matmul_tn: shape mismatch");
  for (std::size_t s = 0; s < A.rows; ++s) {
    const double* as = A.row(s);
    const double* bs = B.row(s);
    for (std::size_t i = 0; i < A.cols; ++i) {
      const double asi = as[i];
      if (asi == 0.0) continue;
      double* ci = C.row(i);
      for (std::size_t j = 0; j < B.cols; ++j) ci[j] += asi * bs[j];
    }
  }
}

// C = A * B^T  (A: S x n, B: m x n, C: S x m); the input-gradient shape.
inline Mat matmul_nt(const Mat& A, const Mat& B) {
  if (A.cols != B.cols) throw Error("matmul_nt: inner dimensions differ");
  Mat C(A.rows, B.rows);
  for (std::size_t i = 0; i < A.rows; ++i) {
    const double* ai = A.row(i);
    double* ci = C.row(i);
    for (std::size_t j = 0; j < B.rows; ++j) {
      const double* bj = B.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < A.cols; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  return C;
}

// y_s = x_s * W + b for every row; W: in x out, b: 1 x out.
inline Mat linear(const Mat& X, const Mat& W, const Mat& b) {
  Mat Y = matmul(X, W);
  if (b.rows != 1 || b.cols != Y.cols) throw Error("linear: bias shape mismatch");
  for (std::size_t i = 0; i < Y.rows; ++i) {
    double* yi = Y.row(i);
    for (std::size_t j = 0; j < Y.cols; ++j) yi[j] += b(0, j);
  }
  return Y;
}

// db += column sums of dY.
inline void add_colsum(Mat& db, const Mat& dY) {
  if (db.rows != 1 || db.cols != dY.cols) throw Error("add_colsum: shape mismatch");
  for (std::size_t i = 0; i < dY.rows; ++i) {
    const double* di = dY.row(i);
    for (std::size_t j = 0; j < dY.cols; ++j) db(0, j) += di[j];
  }
}

inline void add_inplace(Mat& A, const Mat& B) {
  if (A.rows != B.rows || A.cols != B.cols) throw Error("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < A.a.size(); ++i) A.a[i] += B.a[i];
}

inline void scale_inplace(Mat& A, double s) {
  for (double& v : A.a) v *= s;
}

inline bool all_finite(const Mat& A) {
  for (double v : A.a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace trajkit
