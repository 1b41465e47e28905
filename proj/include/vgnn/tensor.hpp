// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records every operation in execution order; backward() replays the
// records in reverse and accumulates gradients additively. Tapes are rebuilt
// per training step (define-by-run). A Var is a cheap handle into one tape.

#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace vgnn {

using Matrix = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int idx = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf tensors. Trainable leaves receive gradients in backward().
  Var leaf(Matrix value, bool requires_grad);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(double v, bool requires_grad = false);

  const Matrix& value(Var v) const { return nodes_[v.idx].value; }
  // Gradient of the last backward() target w.r.t. v; zeros if v is off-path.
  Matrix grad(Var v) const;

  // loss must be 1x1. One backward per tape.
  void backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }

  // --- internals used by the op implementations ---
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched by backward
    bool requires_grad = false;
    std::function<void(Tape&, int self)> backprop;  // null for leaves
  };
  Var record(Matrix value, bool requires_grad,
             std::function<void(Tape&, int)> backprop);
  void accumulate(int idx, const Matrix& g);
  const Matrix& grad_ref(int idx) const { return nodes_[idx].grad; }
  bool requires_grad(Var v) const { return nodes_[v.idx].requires_grad; }

 private:
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

std::string shape_str(const Matrix& m);

// Elementwise binary ops. Broadcasting: (n,m) op (1,m), (n,m) op (1,1),
// in either argument order.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);

// x (n x in) * W^T (in x out) + b (1 x out, broadcast over rows) as a single
// node; the dense-layer hot path.
Var affine(Var x, Var W, Var b);

Var swish(Var x);     // x * sigmoid(x)
Var softplus(Var x);  // log(1 + e^x), numerically stable
Var log(Var x);
Var exp(Var x);
Var square(Var x);
Var sqrt(Var x);
Var cwise_max(Var a, Var b);  // ties route the gradient to a

Var sum(Var x);  // full reduction to 1x1

Var gather_rows(Var x, const std::vector<int>& rows);

// [v(src), v(dst), e] in one node; the per-pass message-input hot path.
Var edge_inputs(Var v, const std::vector<int>& src, const std::vector<int>& dst,
                Var e);

// affine(edge_inputs(v, src, dst, e), W, b) without materializing the edge
// inputs: the node blocks of W are applied on node rows and gathered.
Var edge_affine(Var v, const std::vector<int>& src, const std::vector<int>& dst,
                Var e, Var W, Var b);
// out has n_out rows; out.row(rows[k]) += x.row(k)
Var scatter_add_rows(Var x, const std::vector<int>& rows, int n_out);
Var hcat(const std::vector<Var>& parts);

}  // namespace vgnn
