#include "hat/tape.hpp"

#include <atomic>
#include <cmath>

namespace hat {

namespace {
std::atomic<int> g_next_tape_id{1};

constexpr Real kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr Real kGeluA = 0.044715;
}  // namespace

Tape::Tape(Mode mode) : mode_(mode), id_(g_next_tape_id.fetch_add(1)) {}

Var Tape::push(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1, id_};
}

void Tape::record(Var v, bool any_parent_grad, std::function<void()> fn) {
  if (mode_ == Mode::NoGrad || !any_parent_grad) return;
  Node& n = node(v);
  n.requires_grad = true;
  n.backprop = std::move(fn);
}

void Tape::check(Var v) const {
  if (v.tape != id_ || v.node < 0 || v.node >= size())
    throw TapeError("value was not recorded on this tape");
}

Var Tape::leaf(Mat value, bool requires_grad) {
  Var v = push(std::move(value));
  node(v).requires_grad = (mode_ == Mode::Grad) && requires_grad;
  return v;
}

const Mat& Tape::val(Var v) const {
  check(v);
  return node(v).value;
}

bool Tape::requires_grad(Var v) const {
  check(v);
  return node(v).requires_grad;
}

Mat& Tape::grad_slot(int idx) {
  Node& n = nodes_[static_cast<size_t>(idx)];
  if (n.grad.empty() && !n.value.empty()) n.grad = Mat(n.value.rows(), n.value.cols());
  return n.grad;
}

const Mat& Tape::grad(Var v) {
  check(v);
  return grad_slot(v.node);
}

void Tape::accumulate(int idx, const Mat& g) {
  if (!nodes_[static_cast<size_t>(idx)].requires_grad) return;
  Mat& slot = grad_slot(idx);
  Real* dst = slot.data();
  const Real* src = g.data();
  for (size_t i = 0; i < slot.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root) {
  check(root);
  const Mat& v = node(root).value;
  if (v.rows() != 1 || v.cols() != 1)
    throw TapeError("backward without a seed needs a 1x1 root, got " + v.shape_str());
  backward(root, Mat::full(1, 1, 1.0));
}

void Tape::backward(Var root, const Mat& seed) {
  check(root);
  if (mode_ == Mode::NoGrad) throw TapeError("backward on a NoGrad tape");
  if (!seed.same_shape(node(root).value))
    throw ShapeError("backward: seed shape " + seed.shape_str() + " does not match root " +
                     node(root).value.shape_str());
  for (auto& n : nodes_) {
    for (auto& x : n.grad.raw()) x = 0.0;
  }
  Mat& rg = grad_slot(root.node);
  for (size_t i = 0; i < rg.size(); ++i) rg.data()[i] = seed.data()[i];
  for (int i = root.node; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.backprop) n.backprop();
  }
}

// ---- primitives ----

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Mat& va = val(a);
  const Mat& vb = val(b);
  check_same_shape(va, vb, "add");
  Mat out = va;
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] += vb.data()[i];
  Var v = push(std::move(out));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    accumulate(a.node, g);
    accumulate(b.node, g);
  });
  return v;
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Mat& va = val(a);
  const Mat& vb = val(b);
  check_same_shape(va, vb, "sub");
  Mat out = va;
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] -= vb.data()[i];
  Var v = push(std::move(out));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    accumulate(a.node, g);
    Mat neg = g;
    for (auto& x : neg.raw()) x = -x;
    accumulate(b.node, neg);
  });
  return v;
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Mat& va = val(a);
  const Mat& vb = val(b);
  check_same_shape(va, vb, "mul");
  Mat out = va;
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] *= vb.data()[i];
  Var v = push(std::move(out));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    const Mat& va = val(a);
    const Mat& vb = val(b);
    Mat da(va.rows(), va.cols()), db(va.rows(), va.cols());
    for (size_t i = 0; i < g.size(); ++i) {
      da.data()[i] = g.data()[i] * vb.data()[i];
      db.data()[i] = g.data()[i] * va.data()[i];
    }
    accumulate(a.node, da);
    accumulate(b.node, db);
  });
  return v;
}

Var Tape::affine(Var a, Real alpha, Real beta) {
  check(a);
  Mat out = val(a);
  for (auto& x : out.raw()) x = alpha * x + beta;
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a, alpha] {
    const Mat& g = grad_slot(v.node);
    Mat da = g;
    for (auto& x : da.raw()) x *= alpha;
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  Var v = push(hat::matmul(val(a), val(b)));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    if (node(a).requires_grad) accumulate(a.node, hat::matmul_nt(g, val(b)));
    if (node(b).requires_grad) accumulate(b.node, hat::matmul_tn(val(a), g));
  });
  return v;
}

Var Tape::matmul_nt(Var a, Var b) {
  check(a);
  check(b);
  Var v = push(hat::matmul_nt(val(a), val(b)));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    if (node(a).requires_grad) accumulate(a.node, hat::matmul(g, val(b)));
    if (node(b).requires_grad) accumulate(b.node, hat::matmul_tn(g, val(a)));
  });
  return v;
}

Var Tape::matmul_tn(Var a, Var b) {
  check(a);
  check(b);
  Var v = push(hat::matmul_tn(val(a), val(b)));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    if (node(a).requires_grad) accumulate(a.node, hat::matmul_nt(val(b), g));
    if (node(b).requires_grad) accumulate(b.node, hat::matmul(val(a), g));
  });
  return v;
}

Var Tape::transpose(Var a) {
  check(a);
  Var v = push(hat::transpose(val(a)));
  record(v, requires_grad(a), [this, v, a] {
    accumulate(a.node, hat::transpose(grad_slot(v.node)));
  });
  return v;
}

Var Tape::add_row(Var a, Var row) {
  check(a);
  check(row);
  const Mat& va = val(a);
  const Mat& vr = val(row);
  if (vr.rows() != 1 || vr.cols() != va.cols())
    throw ShapeError("add_row: row " + vr.shape_str() + " does not broadcast over " + va.shape_str());
  Mat out = va;
  for (int i = 0; i < out.rows(); ++i) {
    Real* orow = out.row(i);
    for (int j = 0; j < out.cols(); ++j) orow[j] += vr.data()[j];
  }
  Var v = push(std::move(out));
  record(v, requires_grad(a) || requires_grad(row), [this, v, a, row] {
    const Mat& g = grad_slot(v.node);
    accumulate(a.node, g);
    if (node(row).requires_grad) {
      Mat dr(1, g.cols());
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) dr(0, j) += g(i, j);
      accumulate(row.node, dr);
    }
  });
  return v;
}

Var Tape::relu(Var a) {
  check(a);
  Mat out = val(a);
  for (auto& x : out.raw()) x = x > 0.0 ? x : 0.0;
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a] {
    const Mat& g = grad_slot(v.node);
    const Mat& va = val(a);
    Mat da(va.rows(), va.cols());
    // subgradient 0 at the kink
    for (size_t i = 0; i < da.size(); ++i) da.data()[i] = va.data()[i] > 0.0 ? g.data()[i] : 0.0;
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::gelu(Var a) {
  check(a);
  const Mat& va = val(a);
  Mat out(va.rows(), va.cols());
  for (size_t i = 0; i < out.size(); ++i) {
    const Real x = va.data()[i];
    const Real t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    out.data()[i] = 0.5 * x * (1.0 + t);
  }
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a] {
    const Mat& g = grad_slot(v.node);
    const Mat& va = val(a);
    Mat da(va.rows(), va.cols());
    for (size_t i = 0; i < da.size(); ++i) {
      const Real x = va.data()[i];
      const Real t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const Real dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      da.data()[i] = g.data()[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::sigmoid(Var a) {
  check(a);
  const Mat& va = val(a);
  Mat out(va.rows(), va.cols());
  for (size_t i = 0; i < out.size(); ++i) {
    const Real x = va.data()[i];
    out.data()[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a] {
    const Mat& g = grad_slot(v.node);
    const Mat& s = val(v);
    Mat da(s.rows(), s.cols());
    for (size_t i = 0; i < da.size(); ++i)
      da.data()[i] = g.data()[i] * s.data()[i] * (1.0 - s.data()[i]);
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::tanh(Var a) {
  check(a);
  const Mat& va = val(a);
  Mat out(va.rows(), va.cols());
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(va.data()[i]);
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a] {
    const Mat& g = grad_slot(v.node);
    const Mat& t = val(v);
    Mat da(t.rows(), t.cols());
    for (size_t i = 0; i < da.size(); ++i)
      da.data()[i] = g.data()[i] * (1.0 - t.data()[i] * t.data()[i]);
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::softmax_rows(Var a, Real scale) {
  check(a);
  Var v = push(hat::softmax_rows(val(a), scale));
  record(v, requires_grad(a), [this, v, a, scale] {
    const Mat& g = grad_slot(v.node);
    const Mat& y = val(v);
    Mat da(y.rows(), y.cols());
    for (int i = 0; i < y.rows(); ++i) {
      Real dot = 0.0;
      for (int j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (int j = 0; j < y.cols(); ++j) da(i, j) = scale * y(i, j) * (g(i, j) - dot);
    }
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::l2_normalize_rows(Var a, Real eps) {
  check(a);
  Var v = push(hat::l2_normalize_rows(val(a), eps));
  record(v, requires_grad(a), [this, v, a, eps] {
    const Mat& g = grad_slot(v.node);
    const Mat& x = val(a);
    Mat da(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
      Real n2 = 0.0, gx = 0.0;
      for (int j = 0; j < x.cols(); ++j) {
        n2 += x(i, j) * x(i, j);
        gx += g(i, j) * x(i, j);
      }
      const Real n = std::sqrt(n2);
      const Real denom = n + eps;
      const Real corr = n > 0.0 ? gx / (n * denom * denom) : 0.0;
      for (int j = 0; j < x.cols(); ++j) da(i, j) = g(i, j) / denom - corr * x(i, j);
    }
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::rowwise_dot(Var a, Var b) {
  check(a);
  check(b);
  const Mat& va = val(a);
  const Mat& vb = val(b);
  check_same_shape(va, vb, "rowwise_dot");
  Mat out(va.rows(), 1);
  for (int i = 0; i < va.rows(); ++i) {
    Real s = 0.0;
    for (int j = 0; j < va.cols(); ++j) s += va(i, j) * vb(i, j);
    out(i, 0) = s;
  }
  Var v = push(std::move(out));
  record(v, requires_grad(a) || requires_grad(b), [this, v, a, b] {
    const Mat& g = grad_slot(v.node);
    const Mat& va = val(a);
    const Mat& vb = val(b);
    Mat da(va.rows(), va.cols()), db(va.rows(), va.cols());
    for (int i = 0; i < va.rows(); ++i) {
      const Real gi = g(i, 0);
      for (int j = 0; j < va.cols(); ++j) {
        da(i, j) = gi * vb(i, j);
        db(i, j) = gi * va(i, j);
      }
    }
    accumulate(a.node, da);
    accumulate(b.node, db);
  });
  return v;
}

Var Tape::hinge_normalize_cols(Var a, Real eps) {
  check(a);
  Var v = push(hat::hinge_normalize_cols(val(a), eps));
  record(v, requires_grad(a), [this, v, a, eps] {
    const Mat& g = grad_slot(v.node);
    const Mat& s = val(a);
    Mat da(s.rows(), s.cols());
    for (int j = 0; j < s.cols(); ++j) {
      Real sum = 0.0, gh = 0.0;
      for (int i = 0; i < s.rows(); ++i) {
        const Real h = s(i, j) > 0.0 ? s(i, j) : 0.0;
        sum += h * h;
        gh += g(i, j) * h;
      }
      const Real n = std::sqrt(sum + eps);
      const Real n3 = n * n * n;
      for (int i = 0; i < s.rows(); ++i) {
        if (s(i, j) > 0.0)
          da(i, j) = g(i, j) / n - s(i, j) * gh / n3;
        else
          da(i, j) = 0.0;
      }
    }
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, Real eps) {
  check(a);
  check(gain);
  check(bias);
  const Mat& x = val(a);
  const Mat& g_ = val(gain);
  const Mat& b_ = val(bias);
  if (g_.rows() != 1 || g_.cols() != x.cols() || b_.rows() != 1 || b_.cols() != x.cols())
    throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(x.cols()));
  const int d = x.cols();
  Mat out(x.rows(), d);
  for (int i = 0; i < x.rows(); ++i) {
    Real mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x(i, j);
    mean /= d;
    Real var = 0.0;
    for (int j = 0; j < d; ++j) {
      const Real c = x(i, j) - mean;
      var += c * c;
    }
    var /= d;
    const Real inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) out(i, j) = (x(i, j) - mean) * inv * g_.data()[j] + b_.data()[j];
  }
  Var v = push(std::move(out));
  record(v, requires_grad(a) || requires_grad(gain) || requires_grad(bias),
         [this, v, a, gain, bias, eps] {
           const Mat& g = grad_slot(v.node);
           const Mat& x = val(a);
           const Mat& gm = val(gain);
           const int d = x.cols();
           Mat da(x.rows(), d);
           Mat dgain(1, d), dbias(1, d);
           for (int i = 0; i < x.rows(); ++i) {
             Real mean = 0.0;
             for (int j = 0; j < d; ++j) mean += x(i, j);
             mean /= d;
             Real var = 0.0;
             for (int j = 0; j < d; ++j) {
               const Real c = x(i, j) - mean;
               var += c * c;
             }
             var /= d;
             const Real inv = 1.0 / std::sqrt(var + eps);
             // xhat = (x - mean) * inv;  dxhat = g * gain
             Real m_dxhat = 0.0, m_dxhat_xhat = 0.0;
             for (int j = 0; j < d; ++j) {
               const Real xhat = (x(i, j) - mean) * inv;
               const Real dxhat = g(i, j) * gm.data()[j];
               m_dxhat += dxhat;
               m_dxhat_xhat += dxhat * xhat;
               dgain(0, j) += g(i, j) * xhat;
               dbias(0, j) += g(i, j);
             }
             m_dxhat /= d;
             m_dxhat_xhat /= d;
             for (int j = 0; j < d; ++j) {
               const Real xhat = (x(i, j) - mean) * inv;
               const Real dxhat = g(i, j) * gm.data()[j];
               da(i, j) = inv * (dxhat - m_dxhat - xhat * m_dxhat_xhat);
             }
           }
           accumulate(a.node, da);
           if (node(gain).requires_grad) accumulate(gain.node, dgain);
           if (node(bias).requires_grad) accumulate(bias.node, dbias);
         });
  return v;
}

Var Tape::sum_all(Var a) {
  check(a);
  const Mat& x = val(a);
  Real s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x.data()[i];
  Var v = push(Mat::full(1, 1, s));
  record(v, requires_grad(a), [this, v, a] {
    const Real g = grad_slot(v.node)(0, 0);
    const Mat& x = val(a);
    accumulate(a.node, Mat::full(x.rows(), x.cols(), g));
  });
  return v;
}

Var Tape::embedding_rows(Var table, const std::vector<int>& ids) {
  check(table);
  const Mat& t = val(table);
  if (ids.empty()) throw InputError("embedding_rows: empty id sequence");
  for (int id : ids)
    if (id < 0 || id >= t.rows())
      throw InputError("embedding_rows: id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(t.rows()) + ")");
  Mat out(static_cast<int>(ids.size()), t.cols());
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < t.cols(); ++j) out(static_cast<int>(i), j) = t(ids[i], j);
  Var v = push(std::move(out));
  record(v, requires_grad(table), [this, v, table, ids] {
    const Mat& g = grad_slot(v.node);
    const Mat& t = val(table);
    Mat dt(t.rows(), t.cols());
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < t.cols(); ++j) dt(ids[i], j) += g(static_cast<int>(i), j);
    accumulate(table.node, dt);
  });
  return v;
}

Var Tape::slice_cols(Var a, int start, int len) {
  check(a);
  const Mat& x = val(a);
  if (start < 0 || len <= 0 || start + len > x.cols())
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of " + x.shape_str());
  Mat out(x.rows(), len);
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < len; ++j) out(i, j) = x(i, start + j);
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a, start, len] {
    const Mat& g = grad_slot(v.node);
    const Mat& x = val(a);
    Mat da(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < len; ++j) da(i, start + j) = g(i, j);
    accumulate(a.node, da);
  });
  return v;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_cols: no parts");
  int total = 0;
  bool any_grad = false;
  const int rows = val(parts[0]).rows();
  for (Var p : parts) {
    check(p);
    if (val(p).rows() != rows)
      throw ShapeError("concat_cols: row counts disagree: " + val(parts[0]).shape_str() + " vs " +
                       val(p).shape_str());
    total += val(p).cols();
    any_grad = any_grad || requires_grad(p);
  }
  Mat out(rows, total);
  int off = 0;
  for (Var p : parts) {
    const Mat& x = val(p);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < x.cols(); ++j) out(i, off + j) = x(i, j);
    off += x.cols();
  }
  Var v = push(std::move(out));
  record(v, any_grad, [this, v, parts] {
    const Mat& g = grad_slot(v.node);
    int off = 0;
    for (Var p : parts) {
      const Mat& x = val(p);
      if (node(p).requires_grad) {
        Mat dp(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i)
          for (int j = 0; j < x.cols(); ++j) dp(i, j) = g(i, off + j);
        accumulate(p.node, dp);
      }
      off += x.cols();
    }
  });
  return v;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no parts");
  int total = 0;
  bool any_grad = false;
  const int cols = val(parts[0]).cols();
  for (Var p : parts) {
    check(p);
    if (val(p).cols() != cols)
      throw ShapeError("concat_rows: column counts disagree: " + val(parts[0]).shape_str() +
                       " vs " + val(p).shape_str());
    total += val(p).rows();
    any_grad = any_grad || requires_grad(p);
  }
  Mat out(total, cols);
  int off = 0;
  for (Var p : parts) {
    const Mat& x = val(p);
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < cols; ++j) out(off + i, j) = x(i, j);
    off += x.rows();
  }
  Var v = push(std::move(out));
  record(v, any_grad, [this, v, parts] {
    const Mat& g = grad_slot(v.node);
    int off = 0;
    for (Var p : parts) {
      const Mat& x = val(p);
      if (node(p).requires_grad) {
        Mat dp(x.rows(), x.cols());
        for (int i = 0; i < x.rows(); ++i)
          for (int j = 0; j < x.cols(); ++j) dp(i, j) = g(off + i, j);
        accumulate(p.node, dp);
      }
      off += x.rows();
    }
  });
  return v;
}

Var Tape::merge_2x2(Var a, int h, int w) {
  check(a);
  const Mat& x = val(a);
  if (x.rows() != 4 * h * w)
    throw ShapeError("merge_2x2: expected " + std::to_string(4 * h * w) + " rows for a " +
                     std::to_string(2 * h) + "x" + std::to_string(2 * w) + " grid, got " +
                     x.shape_str());
  const int d = x.cols();
  Mat out(h * w, 4 * d);
  auto in_row = [w](int r, int c) { return r * 2 * w + c; };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int o = r * w + c;
      const int src[4] = {in_row(2 * r, 2 * c), in_row(2 * r, 2 * c + 1), in_row(2 * r + 1, 2 * c),
                          in_row(2 * r + 1, 2 * c + 1)};
      for (int q = 0; q < 4; ++q)
        for (int j = 0; j < d; ++j) out(o, q * d + j) = x(src[q], j);
    }
  Var v = push(std::move(out));
  record(v, requires_grad(a), [this, v, a, h, w] {
    const Mat& g = grad_slot(v.node);
    const Mat& x = val(a);
    const int d = x.cols();
    Mat da(x.rows(), d);
    auto in_row = [w](int r, int c) { return r * 2 * w + c; };
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const int o = r * w + c;
        const int src[4] = {in_row(2 * r, 2 * c), in_row(2 * r, 2 * c + 1),
                            in_row(2 * r + 1, 2 * c), in_row(2 * r + 1, 2 * c + 1)};
        for (int q = 0; q < 4; ++q)
          for (int j = 0; j < d; ++j) da(src[q], j) += g(o, q * d + j);
      }
    accumulate(a.node, da);
  });
  return v;
}

}  // namespace hat
