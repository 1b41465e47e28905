#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fd_check.hpp"
#include "vgnn/tensor.hpp"

using namespace vgnn;
using vgnn::testing::fd_max_rel_err;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

}  // namespace

TEST_CASE("swish and softplus point values") {
  Tape t;
  Var x = t.leaf(Matrix::Zero(1, 1), false);
  CHECK(t.value(swish(x))(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(t.value(softplus(x))(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix v(1, 2);
  v << 1.5, -3.0;
  Var y = t.leaf(v, false);
  Matrix sp = t.value(softplus(y));
  CHECK(sp(0, 0) == doctest::Approx(std::log1p(std::exp(1.5))).epsilon(1e-14));
  CHECK(sp(0, 1) == doctest::Approx(std::log1p(std::exp(-3.0))).epsilon(1e-14));
  // stability at large magnitudes
  Matrix big(1, 2);
  big << 800.0, -800.0;
  Matrix spb = t.value(softplus(t.leaf(big, false)));
  CHECK(spb(0, 0) == doctest::Approx(800.0));
  CHECK(spb(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("scatter_add aggregates additively") {
  Tape t;
  Matrix e(2, 1);
  e << 3.0, 4.0;  // edge values e_12 = 3, e_32 = 4
  Var x = t.leaf(e, false);
  Var agg = scatter_add_rows(x, {1, 1}, 3);  // both target node index 1
  CHECK(t.value(agg)(1, 0) == doctest::Approx(7.0));
  CHECK(t.value(agg)(0, 0) == 0.0);
  CHECK(t.value(agg)(2, 0) == 0.0);
}

TEST_CASE("backward: sum of squares") {
  Tape t;
  Matrix x(2, 1);
  x << 1.0, 2.0;
  Var xv = t.leaf(x, true);
  Var loss = sum(square(xv));
  t.backward(loss);
  Matrix g = t.grad(xv);
  CHECK(g(0, 0) == doctest::Approx(2.0));
  CHECK(g(1, 0) == doctest::Approx(4.0));
}

TEST_CASE("backward: softplus at 0 has grad 0.5") {
  Tape t;
  Var rho = t.leaf(Matrix::Zero(1, 1), true);
  Var loss = sum(softplus(rho));
  t.backward(loss);
  CHECK(t.grad(rho)(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("non-scalar loss rejected") {
  Tape t;
  Var x = t.leaf(Matrix::Ones(2, 2), true);
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("shape mismatch diagnostics name both shapes") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 3), false);
  Var b = t.leaf(Matrix::Ones(4, 5), false);
  try {
    (void)matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
  CHECK_THROWS_AS(a + b, std::invalid_argument);
}

TEST_CASE("gradient used twice accumulates") {
  Tape t;
  Var x = t.leaf(Matrix::Constant(1, 1, 3.0), true);
  Var loss = sum(x * x + x);  // d/dx = 2x + 1 = 7
  t.backward(loss);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("op off the loss path contributes zero gradient") {
  Tape t;
  Var x = t.leaf(Matrix::Constant(1, 1, 2.0), true);
  Var y = t.leaf(Matrix::Constant(1, 1, 5.0), true);
  Var unused = exp(y * 3.0);
  (void)unused;
  Var loss = sum(square(x));
  t.backward(loss);
  CHECK(t.grad(y)(0, 0) == 0.0);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("finite differences: every op, 100 random instances") {
  std::mt19937_64 rng(12345);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix a0 = random_matrix(3, 4, rng);
    Matrix b0 = random_matrix(3, 4, rng);
    Matrix w0 = random_matrix(4, 2, rng);
    Matrix s0 = random_matrix(1, 4, rng, 0.5, 2.0);  // row-broadcast, positive
    Matrix c0 = random_matrix(1, 1, rng, 0.5, 2.0);  // scalar broadcast

    auto build = [&](const std::vector<Matrix>& in, Tape& t,
                     std::vector<Var>& leaves) {
      Var a = t.leaf(in[0], true);
      Var b = t.leaf(in[1], true);
      Var w = t.leaf(in[2], true);
      Var s = t.leaf(in[3], true);
      Var c = t.leaf(in[4], true);
      leaves = {a, b, w, s, c};
      Var m = matmul(swish(a) + b / s, w);          // matmul, swish, div bcast
      Var n = hcat({square(a), exp(b * 0.3)});      // hcat, square, exp
      Var p = softplus(a - b) * c;                  // softplus, scalar bcast mul
      Var q = log(s + 1.5) + sqrt(c);               // log, sqrt
      Var r = cwise_max(a, b) * 0.25;               // max
      Var g = gather_rows(n, {2, 0, 1, 2});
      Var sc = scatter_add_rows(g, {0, 1, 1, 2}, 3);
      Var tr = transpose(m);
      return sum(m) + sum(p) * 0.5 + sum(q) + sum(r) + sum(sc) * 0.1 +
             sum(tr * 0.01) - sum(n) * 0.05;
    };

    std::vector<Matrix> inputs = {a0, b0, w0, s0, c0};
    Tape t;
    std::vector<Var> leaves;
    Var loss = build(inputs, t, leaves);
    t.backward(loss);
    std::vector<Matrix> grads;
    for (Var v : leaves) grads.push_back(t.grad(v));

    auto f = [&](const std::vector<Matrix>& in) {
      Tape tt;
      std::vector<Var> lv;
      return tt.value(build(in, tt, lv))(0, 0);
    };
    worst = std::max(worst, fd_max_rel_err(f, inputs, grads));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("scatter_add is linear") {
  std::mt19937_64 rng(7);
  Matrix A = random_matrix(6, 3, rng), B = random_matrix(6, 3, rng);
  std::vector<int> idx = {0, 2, 2, 1, 4, 0};
  const double alpha = 1.7, beta = -0.4;
  Tape t;
  Matrix lhs = t.value(scatter_add_rows(t.constant(alpha * A + beta * B), idx, 5));
  Matrix rhs = alpha * t.value(scatter_add_rows(t.constant(A), idx, 5)) +
               beta * t.value(scatter_add_rows(t.constant(B), idx, 5));
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("broadcast gradients reduce correctly") {
  // (n,m) + (1,m) and (n,m) * (1,1)
  Tape t;
  Var x = t.leaf(Matrix::Ones(3, 2), true);
  Var b = t.leaf(Matrix::Ones(1, 2), true);
  Var c = t.leaf(Matrix::Constant(1, 1, 2.0), true);
  Var loss = sum((x + b) * c);
  t.backward(loss);
  CHECK(t.grad(b)(0, 0) == doctest::Approx(6.0));  // summed over 3 rows
  CHECK(t.grad(c)(0, 0) == doctest::Approx(12.0)); // sum over x+b
  CHECK(t.grad(x)(1, 1) == doctest::Approx(2.0));
}
