#pragma once

#include <functional>
#include <vector>

#include "hat/mat.hpp"

namespace hat {

class Tape;

// Handle to a value recorded on a tape. Only valid for the tape that issued
// it; using it elsewhere is a contract violation.
struct Var {
  int node = -1;
  int tape = -1;
};

// Reverse-mode tape over Mat values. Ops evaluate eagerly; in Grad mode each
// op whose inputs require a gradient also records a backward closure. The
// tape is rebuilt per forward pass and never shared across threads.
class Tape {
public:
  enum class Mode { Grad, NoGrad };

  explicit Tape(Mode mode = Mode::Grad);

  Mode mode() const { return mode_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Leaves. requires_grad marks trainable parameters; it is ignored (forced
  // off) in NoGrad mode.
  Var leaf(Mat value, bool requires_grad = false);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& val(Var v) const;
  // Gradient of the last backward() root w.r.t. v. Zero-shaped gradients are
  // materialized on demand for nodes the root does not reach.
  const Mat& grad(Var v);
  bool requires_grad(Var v) const;

  // Seeds root with ones (root must then be 1x1) or with an explicit seed of
  // the root's shape, zeroes all gradients, and runs the recorded closures in
  // reverse order.
  void backward(Var root);
  void backward(Var root, const Mat& seed);

  // ---- primitives ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                  // elementwise
  Var affine(Var a, Real alpha, Real beta);  // alpha*a + beta
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);            // a * b^T
  Var matmul_tn(Var a, Var b);            // a^T * b
  Var transpose(Var a);
  Var add_row(Var a, Var row);            // broadcast 1xD row over NxD
  Var relu(Var a);
  Var gelu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var softmax_rows(Var a, Real scale);
  Var l2_normalize_rows(Var a, Real eps);
  Var rowwise_dot(Var a, Var b);          // NxD, NxD -> Nx1
  Var hinge_normalize_cols(Var a, Real eps);  // relu then column-wise L2 scale
  Var layer_norm_rows(Var a, Var gain, Var bias, Real eps);
  Var sum_all(Var a);                     // -> 1x1
  Var embedding_rows(Var table, const std::vector<int>& ids);
  Var slice_cols(Var a, int start, int len);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  // (2h*2w)xD row-major grid -> (h*w)x4D, each output row the concatenation
  // of a 2x2 neighborhood.
  Var merge_2x2(Var a, int h, int w);

private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> backprop;
  };

  Var push(Mat value);
  void record(Var v, bool any_parent_grad, std::function<void()> fn);
  void check(Var v) const;
  Mat& grad_slot(int node);
  void accumulate(int node, const Mat& g);

  Node& node(Var v) { return nodes_[static_cast<size_t>(v.node)]; }
  const Node& node(Var v) const { return nodes_[static_cast<size_t>(v.node)]; }

  std::vector<Node> nodes_;
  Mode mode_;
  int id_;
};

}  // namespace hat
