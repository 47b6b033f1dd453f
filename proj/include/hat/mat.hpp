#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hat/errors.hpp"

namespace hat {

// Single numeric width for the whole project: IEEE-754 binary64.
using Real = double;

// Dense row-major matrix. Vectors are 1xN or Nx1 matrices.
class Mat {
public:
  Mat() = default;

  Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw ShapeError("negative dimensions " + shape_str());
  }

  Mat(int rows, int cols, std::vector<Real> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<size_t>(rows) * cols)
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match " + shape_str());
  }

  static Mat full(int rows, int cols, Real v) {
    Mat m(rows, cols);
    for (auto& x : m.data_) x = v;
    return m;
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  Real operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  Real* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const Real* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  std::vector<Real>& raw() { return data_; }
  const std::vector<Real>& raw() const { return data_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool all_finite() const {
    for (Real x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool operator==(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Real> data_;
};

inline void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
}

// ---- plain forward kernels (the tape reuses these, so train and eval paths
// ---- share the exact same arithmetic) ----

// Standard product, ikj loop order over contiguous rows.
Mat matmul(const Mat& a, const Mat& b);

// a * b^T
Mat matmul_nt(const Mat& a, const Mat& b);

// a^T * b
Mat matmul_tn(const Mat& a, const Mat& b);

Mat transpose(const Mat& a);

// Row-wise softmax of scale*x, computed with max subtraction. scale == 0
// yields the uniform distribution on every row.
Mat softmax_rows(const Mat& x, Real scale);

// Cosine similarity of two equal-length value sequences, with eps added to
// each norm. Zero vectors give 0, never NaN.
Real cosine(const Mat& u, const Mat& v, Real eps = 1e-8);

// Each row divided by (||row|| + eps).
Mat l2_normalize_rows(const Mat& a, Real eps);

// Entries clamped at zero from below, then each column divided by
// sqrt(sum of squared clamped entries + eps).
Mat hinge_normalize_cols(const Mat& a, Real eps);

}  // namespace hat
