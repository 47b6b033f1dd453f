#include "hat/mat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hat {

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Mat c(m, n);
  for (int i = 0; i < m; ++i) {
    const Real* arow = a.row(i);
    Real* crow = c.row(i);
    for (int p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == 0.0) continue;
      const Real* brow = b.row(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Mat c(m, n);
  for (int i = 0; i < m; ++i) {
    const Real* arow = a.row(i);
    Real* crow = c.row(i);
    for (int j = 0; j < n; ++j) {
      const Real* brow = b.row(j);
      Real s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = s;
    }
  }
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  const int k = a.rows(), m = a.cols(), n = b.cols();
  Mat c(m, n);
  for (int p = 0; p < k; ++p) {
    const Real* arow = a.row(p);
    const Real* brow = b.row(p);
    for (int i = 0; i < m; ++i) {
      const Real av = arow[i];
      if (av == 0.0) continue;
      Real* crow = c.row(i);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Mat softmax_rows(const Mat& x, Real scale) {
  if (!std::isfinite(scale)) throw InputError("softmax_rows: scale is not finite");
  Mat y(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const Real* in = x.row(i);
    Real* out = y.row(i);
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int j = 0; j < x.cols(); ++j) mx = std::max(mx, scale * in[j]);
    Real sum = 0.0;
    for (int j = 0; j < x.cols(); ++j) {
      out[j] = std::exp(scale * in[j] - mx);
      sum += out[j];
    }
    for (int j = 0; j < x.cols(); ++j) out[j] /= sum;
  }
  return y;
}

Real cosine(const Mat& u, const Mat& v, Real eps) {
  if (u.size() != v.size())
    throw ShapeError("cosine: lengths disagree: " + u.shape_str() + " vs " + v.shape_str());
  Real dot = 0.0, nu = 0.0, nv = 0.0;
  const Real* pu = u.data();
  const Real* pv = v.data();
  for (size_t i = 0; i < u.size(); ++i) {
    dot += pu[i] * pv[i];
    nu += pu[i] * pu[i];
    nv += pv[i] * pv[i];
  }
  return dot / ((std::sqrt(nu) + eps) * (std::sqrt(nv) + eps));
}

Mat l2_normalize_rows(const Mat& a, Real eps) {
  Mat y(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const Real* in = a.row(i);
    Real* out = y.row(i);
    Real n2 = 0.0;
    for (int j = 0; j < a.cols(); ++j) n2 += in[j] * in[j];
    const Real inv = 1.0 / (std::sqrt(n2) + eps);
    for (int j = 0; j < a.cols(); ++j) out[j] = in[j] * inv;
  }
  return y;
}

Mat hinge_normalize_cols(const Mat& a, Real eps) {
  Mat y(a.rows(), a.cols());
  for (int j = 0; j < a.cols(); ++j) {
    Real sum = 0.0;
    for (int i = 0; i < a.rows(); ++i) {
      const Real h = a(i, j) > 0.0 ? a(i, j) : 0.0;
      sum += h * h;
    }
    const Real norm = std::sqrt(sum + eps);
    for (int i = 0; i < a.rows(); ++i) {
      const Real h = a(i, j) > 0.0 ? a(i, j) : 0.0;
      y(i, j) = h / norm;
    }
  }
  return y;
}

}  // namespace hat
