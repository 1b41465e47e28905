#include "vgnn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace vgnn {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  return record(std::move(value), requires_grad, nullptr);
}

Var Tape::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), requires_grad);
}

Var Tape::record(Matrix value, bool requires_grad,
                 std::function<void(Tape&, int)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int idx, const Matrix& g) {
  Matrix& dst = nodes_[idx].grad;
  if (dst.size() == 0) {
    dst = g;
  } else {
    dst += g;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.idx];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (value(loss).rows() != 1 || value(loss).cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " +
                                shape_str(value(loss)));
  if (backward_done_)
    throw std::logic_error("backward: tape already differentiated");
  backward_done_ = true;
  accumulate(loss.idx, Matrix::Ones(1, 1));
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() != 0 && n.backprop) n.backprop(*this, i);
  }
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape)
    throw std::invalid_argument("operands belong to different tapes");
}

// Sum a broadcast gradient back down to the operand's shape.
Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) {
    Matrix r(1, 1);
    r(0, 0) = g.sum();
    return r;
  }
  if (rows == 1 && g.cols() == cols) return g.colwise().sum();
  throw std::logic_error("reduce_to: unreachable broadcast shape");
}

bool broadcast_ok(const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return true;
  auto is_bcast = [](const Matrix& s, const Matrix& big) {
    return (s.rows() == 1 && s.cols() == 1) ||
           (s.rows() == 1 && s.cols() == big.cols());
  };
  return is_bcast(a, b) || is_bcast(b, a);
}

// Expand a (1,1) or (1,m) operand to (rows, cols) for elementwise work.
Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1)
    return Matrix::Constant(rows, cols, m(0, 0));
  return m.replicate(rows, 1);
}

struct BinaryShapes {
  Eigen::Index rows, cols;
};

BinaryShapes binary_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!broadcast_ok(a, b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
  return {std::max(a.rows(), b.rows()), std::max(a.cols(), b.cols())};
}

bool any_grad(Var a, Var b) {
  return a.tape->requires_grad(a) || b.tape->requires_grad(b);
}

}  // namespace

Var operator+(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix &av = t.value(a), &bv = t.value(b);
  auto s = binary_shape("add", av, bv);
  Matrix out = expand(av, s.rows, s.cols) + expand(bv, s.rows, s.cols);
  auto ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  return t.record(std::move(out), any_grad(a, b),
                  [=](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    if (tp.requires_grad(a)) tp.accumulate(a.idx, reduce_to(g, ar, ac));
                    if (tp.requires_grad(b)) tp.accumulate(b.idx, reduce_to(g, br, bc));
                  });
}

Var operator-(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix &av = t.value(a), &bv = t.value(b);
  auto s = binary_shape("sub", av, bv);
  Matrix out = expand(av, s.rows, s.cols) - expand(bv, s.rows, s.cols);
  auto ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  return t.record(std::move(out), any_grad(a, b),
                  [=](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    if (tp.requires_grad(a)) tp.accumulate(a.idx, reduce_to(g, ar, ac));
                    if (tp.requires_grad(b)) tp.accumulate(b.idx, reduce_to(-g, br, bc));
                  });
}

Var operator*(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix &av = t.value(a), &bv = t.value(b);
  auto s = binary_shape("mul", av, bv);
  Matrix ae = expand(av, s.rows, s.cols), be = expand(bv, s.rows, s.cols);
  Matrix out = ae.cwiseProduct(be);
  auto ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  return t.record(std::move(out), any_grad(a, b),
                  [=, ae = std::move(ae), be = std::move(be)](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    if (tp.requires_grad(a))
                      tp.accumulate(a.idx, reduce_to(g.cwiseProduct(be), ar, ac));
                    if (tp.requires_grad(b))
                      tp.accumulate(b.idx, reduce_to(g.cwiseProduct(ae), br, bc));
                  });
}

Var operator/(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix &av = t.value(a), &bv = t.value(b);
  auto s = binary_shape("div", av, bv);
  Matrix ae = expand(av, s.rows, s.cols), be = expand(bv, s.rows, s.cols);
  Matrix out = ae.cwiseQuotient(be);
  auto ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  return t.record(std::move(out), any_grad(a, b),
                  [=, ae = std::move(ae), be = std::move(be)](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    if (tp.requires_grad(a))
                      tp.accumulate(a.idx, reduce_to(g.cwiseQuotient(be), ar, ac));
                    if (tp.requires_grad(b)) {
                      Matrix gb = -g.cwiseProduct(ae).cwiseQuotient(be.cwiseProduct(be));
                      tp.accumulate(b.idx, reduce_to(gb, br, bc));
                    }
                  });
}

Var operator-(Var a) { return a * (-1.0); }
Var operator+(Var a, double c) {
  Tape& t = *a.tape;
  Matrix out = t.value(a).array() + c;
  return t.record(std::move(out), t.requires_grad(a),
                  [=](Tape& tp, int self) { tp.accumulate(a.idx, tp.grad_ref(self)); });
}
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }
Var operator*(Var a, double c) {
  Tape& t = *a.tape;
  Matrix out = t.value(a) * c;
  return t.record(std::move(out), t.requires_grad(a),
                  [=](Tape& tp, int self) {
                    tp.accumulate(a.idx, Matrix(tp.grad_ref(self) * c));
                  });
}
Var operator*(double c, Var a) { return a * c; }

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix &av = t.value(a), &bv = t.value(b);
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions differ, " +
                                shape_str(av) + " * " + shape_str(bv));
  Matrix out = av * bv;
  return t.record(std::move(out), any_grad(a, b),
                  [=](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    if (tp.requires_grad(a))
                      tp.accumulate(a.idx, Matrix(g * tp.value(b).transpose()));
                    if (tp.requires_grad(b))
                      tp.accumulate(b.idx, Matrix(tp.value(a).transpose() * g));
                  });
}

Var affine(Var x, Var W, Var b) {
  check_same_tape(x, W);
  check_same_tape(x, b);
  Tape& t = *x.tape;
  const Matrix &xv = t.value(x), &wv = t.value(W), &bv = t.value(b);
  if (xv.cols() != wv.cols())
    throw std::invalid_argument("affine: input width " + shape_str(xv) +
                                " does not match weight " + shape_str(wv));
  if (bv.rows() != 1 || bv.cols() != wv.rows())
    throw std::invalid_argument("affine: bias " + shape_str(bv) +
                                " does not match weight " + shape_str(wv));
  Matrix out = xv * wv.transpose();
  out.rowwise() += bv.row(0);
  const bool rg = t.requires_grad(x) || t.requires_grad(W) || t.requires_grad(b);
  return t.record(std::move(out), rg, [=](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.requires_grad(x)) tp.accumulate(x.idx, Matrix(g * tp.value(W)));
    if (tp.requires_grad(W))
      tp.accumulate(W.idx, Matrix(g.transpose() * tp.value(x)));
    if (tp.requires_grad(b)) tp.accumulate(b.idx, Matrix(g.colwise().sum()));
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  Matrix out = t.value(a).transpose();
  return t.record(std::move(out), t.requires_grad(a),
                  [=](Tape& tp, int self) {
                    tp.accumulate(a.idx, Matrix(tp.grad_ref(self).transpose()));
                  });
}

namespace {
Matrix sigmoid_mat(const Matrix& x) {
  return (1.0 + (-x.array()).exp()).inverse();
}
}  // namespace

Var swish(Var x) {
  Tape& t = *x.tape;
  Matrix s = sigmoid_mat(t.value(x));
  Matrix out = t.value(x).cwiseProduct(s);
  return t.record(std::move(out), t.requires_grad(x),
                  [=, s = std::move(s)](Tape& tp, int self) {
                    // d/dx x*s(x) = s * (1 + x*(1-s))
                    const auto& xv = tp.value(x).array();
                    Matrix d = s.array() * (1.0 + xv * (1.0 - s.array()));
                    tp.accumulate(x.idx, Matrix(tp.grad_ref(self).cwiseProduct(d)));
                  });
}

Var softplus(Var x) {
  Tape& t = *x.tape;
  // stable form max(x,0) + log1p(e^-|x|), vectorized
  const auto& xv = t.value(x).array();
  Matrix out = xv.max(0.0) + (-xv.abs()).exp().log1p();
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    Matrix d = sigmoid_mat(tp.value(x));
                    tp.accumulate(x.idx, Matrix(tp.grad_ref(self).cwiseProduct(d)));
                  });
}

Var log(Var x) {
  Tape& t = *x.tape;
  Matrix out = t.value(x).array().log();
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    tp.accumulate(x.idx, Matrix(tp.grad_ref(self).cwiseQuotient(tp.value(x))));
                  });
}

Var exp(Var x) {
  Tape& t = *x.tape;
  Matrix out = t.value(x).array().exp();
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    // d/dx e^x = e^x, already stored as this node's value
                    tp.accumulate(x.idx, Matrix(tp.grad_ref(self).cwiseProduct(tp.value(Var{&tp, self}))));
                  });
}

Var square(Var x) {
  Tape& t = *x.tape;
  Matrix out = t.value(x).array().square();
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    tp.accumulate(x.idx, Matrix(2.0 * tp.grad_ref(self).cwiseProduct(tp.value(x))));
                  });
}

Var sqrt(Var x) {
  Tape& t = *x.tape;
  Matrix out = t.value(x).array().sqrt();
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    Matrix d = 0.5 * tp.value(Var{&tp, self}).cwiseInverse();
                    tp.accumulate(x.idx, Matrix(tp.grad_ref(self).cwiseProduct(d)));
                  });
}

Var cwise_max(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  const Matrix &av = t.value(a), &bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols())
    throw std::invalid_argument("cwise_max: shape mismatch " + shape_str(av) +
                                " vs " + shape_str(bv));
  Matrix out = av.cwiseMax(bv);
  return t.record(std::move(out), any_grad(a, b),
                  [=](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    const Matrix &x = tp.value(a), &y = tp.value(b);
                    Matrix mask = (x.array() >= y.array()).cast<double>();
                    if (tp.requires_grad(a))
                      tp.accumulate(a.idx, Matrix(g.cwiseProduct(mask)));
                    if (tp.requires_grad(b))
                      tp.accumulate(b.idx, Matrix(g.cwiseProduct(Matrix(Matrix::Ones(mask.rows(), mask.cols()) - mask))));
                  });
}

Var sum(Var x) {
  Tape& t = *x.tape;
  Matrix out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    const Matrix& xv = tp.value(x);
                    tp.accumulate(x.idx, Matrix(Matrix::Constant(
                                             xv.rows(), xv.cols(), tp.grad_ref(self)(0, 0))));
                  });
}

Var gather_rows(Var x, const std::vector<int>& rows) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  for (int r : rows)
    if (r < 0 || r >= xv.rows())
      throw std::invalid_argument("gather_rows: index " + std::to_string(r) +
                                  " out of range for " + shape_str(xv));
  Matrix out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (size_t k = 0; k < rows.size(); ++k) out.row(k) = xv.row(rows[k]);
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    const Matrix& src = tp.value(x);
                    Matrix gx = Matrix::Zero(src.rows(), src.cols());
                    for (size_t k = 0; k < rows.size(); ++k) gx.row(rows[k]) += g.row(k);
                    tp.accumulate(x.idx, gx);
                  });
}

Var edge_inputs(Var v, const std::vector<int>& src, const std::vector<int>& dst,
                Var e) {
  check_same_tape(v, e);
  Tape& t = *v.tape;
  const Matrix &vv = t.value(v), &ev = t.value(e);
  const auto n_edges = static_cast<Eigen::Index>(src.size());
  if (static_cast<Eigen::Index>(dst.size()) != n_edges || ev.rows() != n_edges)
    throw std::invalid_argument("edge_inputs: src/dst/e length mismatch");
  for (size_t k = 0; k < src.size(); ++k)
    if (src[k] < 0 || src[k] >= vv.rows() || dst[k] < 0 || dst[k] >= vv.rows())
      throw std::invalid_argument("edge_inputs: node index out of range");
  const Eigen::Index w = vv.cols(), we = ev.cols();
  Matrix out(n_edges, 2 * w + we);
  for (Eigen::Index k = 0; k < n_edges; ++k) {
    out.row(k).segment(0, w) = vv.row(src[k]);
    out.row(k).segment(w, w) = vv.row(dst[k]);
  }
  out.rightCols(we) = ev;
  const bool rg = t.requires_grad(v) || t.requires_grad(e);
  return t.record(std::move(out), rg, [=](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    if (tp.requires_grad(v)) {
      const Matrix& src_v = tp.value(v);
      Matrix gv = Matrix::Zero(src_v.rows(), src_v.cols());
      for (Eigen::Index k = 0; k < n_edges; ++k) {
        gv.row(src[k]) += g.row(k).segment(0, w);
        gv.row(dst[k]) += g.row(k).segment(w, w);
      }
      tp.accumulate(v.idx, gv);
    }
    if (tp.requires_grad(e)) tp.accumulate(e.idx, Matrix(g.rightCols(we)));
  });
}

Var edge_affine(Var v, const std::vector<int>& src, const std::vector<int>& dst,
                Var e, Var W, Var b) {
  check_same_tape(v, e);
  check_same_tape(v, W);
  check_same_tape(v, b);
  Tape& t = *v.tape;
  const Matrix &vv = t.value(v), &ev = t.value(e);
  const Matrix &wv = t.value(W), &bv = t.value(b);
  const auto n_edges = static_cast<Eigen::Index>(src.size());
  if (static_cast<Eigen::Index>(dst.size()) != n_edges || ev.rows() != n_edges)
    throw std::invalid_argument("edge_affine: src/dst/e length mismatch");
  const Eigen::Index w = vv.cols(), we = ev.cols();
  if (wv.cols() != 2 * w + we)
    throw std::invalid_argument("edge_affine: weight width mismatch");
  if (bv.rows() != 1 || bv.cols() != wv.rows())
    throw std::invalid_argument("edge_affine: bias shape mismatch");
  for (size_t k = 0; k < src.size(); ++k)
    if (src[k] < 0 || src[k] >= vv.rows() || dst[k] < 0 || dst[k] >= vv.rows())
      throw std::invalid_argument("edge_affine: node index out of range");
  Matrix a = vv * wv.leftCols(w).transpose();
  Matrix c = vv * wv.middleCols(w, w).transpose();
  Matrix out = ev * wv.rightCols(we).transpose();
  for (Eigen::Index k = 0; k < n_edges; ++k)
    out.row(k) += a.row(src[k]) + c.row(dst[k]);
  out.rowwise() += bv.row(0);
  const bool rg = t.requires_grad(v) || t.requires_grad(e) ||
                  t.requires_grad(W) || t.requires_grad(b);
  return t.record(std::move(out), rg, [=](Tape& tp, int self) {
    const Matrix& g = tp.grad_ref(self);
    const Matrix &vg = tp.value(v), &wg = tp.value(W);
    const bool need_v = tp.requires_grad(v), need_w = tp.requires_grad(W);
    if (need_v || need_w) {
      // g scattered back to node rows, once per endpoint role.
      Matrix gs = Matrix::Zero(vg.rows(), g.cols());
      Matrix gd = Matrix::Zero(vg.rows(), g.cols());
      for (Eigen::Index k = 0; k < n_edges; ++k) {
        gs.row(src[k]) += g.row(k);
        gd.row(dst[k]) += g.row(k);
      }
      if (need_v)
        tp.accumulate(v.idx, Matrix(gs * wg.leftCols(w) +
                                    gd * wg.middleCols(w, w)));
      if (need_w) {
        Matrix gw(wg.rows(), wg.cols());
        gw.leftCols(w) = gs.transpose() * vg;
        gw.middleCols(w, w) = gd.transpose() * vg;
        gw.rightCols(we) = g.transpose() * tp.value(e);
        tp.accumulate(W.idx, gw);
      }
    }
    if (tp.requires_grad(e)) tp.accumulate(e.idx, Matrix(g * wg.rightCols(we)));
    if (tp.requires_grad(b)) tp.accumulate(b.idx, Matrix(g.colwise().sum()));
  });
}

Var scatter_add_rows(Var x, const std::vector<int>& rows, int n_out) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  if (static_cast<Eigen::Index>(rows.size()) != xv.rows())
    throw std::invalid_argument("scatter_add_rows: " + std::to_string(rows.size()) +
                                " indices for " + shape_str(xv));
  for (int r : rows)
    if (r < 0 || r >= n_out)
      throw std::invalid_argument("scatter_add_rows: index " + std::to_string(r) +
                                  " out of range [0," + std::to_string(n_out) + ")");
  Matrix out = Matrix::Zero(n_out, xv.cols());
  for (size_t k = 0; k < rows.size(); ++k) out.row(rows[k]) += xv.row(k);
  return t.record(std::move(out), t.requires_grad(x),
                  [=](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    const Matrix& src = tp.value(x);
                    Matrix gx(src.rows(), src.cols());
                    for (size_t k = 0; k < rows.size(); ++k) gx.row(k) = g.row(rows[k]);
                    tp.accumulate(x.idx, gx);
                  });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no operands");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    check_same_tape(parts[0], p);
    if (t.value(p).rows() != rows)
      throw std::invalid_argument("hcat: row mismatch " + shape_str(t.value(parts[0])) +
                                  " vs " + shape_str(t.value(p)));
    cols += t.value(p).cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    out.middleCols(off, t.value(p).cols()) = t.value(p);
    off += t.value(p).cols();
  }
  std::vector<Var> ps = parts;
  return t.record(std::move(out), rg,
                  [ps](Tape& tp, int self) {
                    const Matrix& g = tp.grad_ref(self);
                    Eigen::Index o = 0;
                    for (Var p : ps) {
                      Eigen::Index w = tp.value(p).cols();
                      if (tp.requires_grad(p))
                        tp.accumulate(p.idx, Matrix(g.middleCols(o, w)));
                      o += w;
                    }
                  });
}

}  // namespace vgnn
