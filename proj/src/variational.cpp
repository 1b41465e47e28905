#include "vgnn/variational.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vgnn {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

double softplus_scalar(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
}  // namespace

VariationalParams make_var_dense(int in, int out, Rng& rng, double rho_init) {
  VariationalParams vp;
  vp.mu_w = glorot_uniform(out, in, rng);
  vp.rho_w = Matrix::Constant(out, in, rho_init);
  vp.mu_b = Matrix::Zero(1, out);
  vp.rho_b = Matrix::Constant(1, out, rho_init);
  return vp;
}

double ScaleMixturePrior::sigma2() const {
  return std::exp(log_s1(0, 0) - softplus_scalar(gap_raw(0, 0)));
}

ScaleMixturePrior make_prior(double sigma1, double sigma2, double pi_w) {
  if (sigma1 < sigma2)
    throw std::invalid_argument("scale-mixture prior needs sigma1 >= sigma2");
  ScaleMixturePrior p;
  p.pi_w = pi_w;
  p.log_s1 = Matrix::Constant(1, 1, std::log(sigma1));
  // softplus(gap_raw) = log(sigma1/sigma2)
  const double gap = std::log(sigma1) - std::log(sigma2);
  p.gap_raw = Matrix::Constant(1, 1, std::log(std::expm1(gap)));
  return p;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

VarDenseVars bind_var_dense(Tape& tape, Trainables& out, const std::string& prefix,
                            VariationalParams& vp, Matrix eps_w, Matrix eps_b) {
  if (eps_w.rows() != vp.mu_w.rows() || eps_w.cols() != vp.mu_w.cols() ||
      eps_b.rows() != vp.mu_b.rows() || eps_b.cols() != vp.mu_b.cols())
    throw std::invalid_argument("epsilon draw does not match layer shape");
  VarDenseVars v;
  v.eps_w = std::move(eps_w);
  v.eps_b = std::move(eps_b);
  v.mu_w = bind_param(tape, out, prefix + ".mu_w", vp.mu_w);
  v.rho_w = bind_param(tape, out, prefix + ".rho_w", vp.rho_w);
  v.mu_b = bind_param(tape, out, prefix + ".mu_b", vp.mu_b);
  v.rho_b = bind_param(tape, out, prefix + ".rho_b", vp.rho_b);
  v.sigma_w = softplus(v.rho_w);
  v.sigma_b = softplus(v.rho_b);
  v.w = v.mu_w + v.sigma_w * tape.constant(v.eps_w);
  v.b = v.mu_b + v.sigma_b * tape.constant(v.eps_b);
  return v;
}

VarDenseVars bind_var_dense_sampled(Tape& tape, Trainables& out,
                                    const std::string& prefix,
                                    VariationalParams& vp, Rng& rng) {
  Matrix ew = normal_matrix(vp.mu_w.rows(), vp.mu_w.cols(), rng);
  Matrix eb = normal_matrix(vp.mu_b.rows(), vp.mu_b.cols(), rng);
  return bind_var_dense(tape, out, prefix, vp, std::move(ew), std::move(eb));
}

PriorVars bind_prior(Tape& tape, Trainables& out, ScaleMixturePrior& prior) {
  PriorVars pv;
  pv.pi_w = prior.pi_w;
  pv.log_s1 = bind_param(tape, out, "prior.log_s1", prior.log_s1);
  pv.gap_raw = bind_param(tape, out, "prior.gap_raw", prior.gap_raw);
  pv.sigma1 = exp(pv.log_s1);
  pv.sigma2 = exp(pv.log_s1 - softplus(pv.gap_raw));
  return pv;
}

Var log_gaussian(Var x, Var mu, Var sigma) {
  // broadcasting spreads a scalar/row sigma over every element of x, so the
  // -log(sigma) and constant terms are counted once per element
  Var z = (x - mu) / sigma;
  return sum(square(z) * (-0.5) - log(sigma) - kHalfLog2Pi);
}

double log_gaussian(const Matrix& x, const Matrix& mu, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("log_gaussian: sigma must be > 0");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = (x(i) - mu(i)) / sigma;
    acc += -0.5 * z * z - std::log(sigma) - kHalfLog2Pi;
  }
  return acc;
}

namespace {

Var log_normal_elem(Var w, Var sigma) {
  // elementwise log N(w | 0, sigma^2) with scalar sigma broadcast
  return square(w / sigma) * (-0.5) - log(sigma) - kHalfLog2Pi;
}

}  // namespace

Var log_prior_term(Var w, const PriorVars& prior, PriorMode mode) {
  Var l1 = log_normal_elem(w, prior.sigma1);
  Var l2 = log_normal_elem(w, prior.sigma2);
  if (mode == PriorMode::kPaperLiteral)
    return sum(l1 * prior.pi_w + l2 * (1.0 - prior.pi_w));
  if (prior.pi_w >= 1.0) return sum(l1);
  if (prior.pi_w <= 0.0) return sum(l2);
  // log( pi*N1 + (1-pi)*N2 ) via a stable log-sum-exp
  Var la = l1 + std::log(prior.pi_w);
  Var lb = l2 + std::log(1.0 - prior.pi_w);
  Var m = cwise_max(la, lb);
  return sum(m + log(exp(la - m) + exp(lb - m)));
}

double log_prior_term(const Matrix& w, const ScaleMixturePrior& prior,
                      PriorMode mode) {
  const double s1 = prior.sigma1(), s2 = prior.sigma2(), pi = prior.pi_w;
  auto log_n = [](double x, double s) {
    const double z = x / s;
    return -0.5 * z * z - std::log(s) - kHalfLog2Pi;
  };
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double l1 = log_n(w(i), s1), l2 = log_n(w(i), s2);
    if (mode == PriorMode::kPaperLiteral) {
      acc += pi * l1 + (1.0 - pi) * l2;
    } else if (pi >= 1.0) {
      acc += l1;
    } else if (pi <= 0.0) {
      acc += l2;
    } else {
      const double m = std::max(l1 + std::log(pi), l2 + std::log(1.0 - pi));
      acc += m + std::log(std::exp(l1 + std::log(pi) - m) +
                          std::exp(l2 + std::log(1.0 - pi) - m));
    }
  }
  return acc;
}

Var log_posterior_term(const VarDenseVars& layer) {
  return log_gaussian(layer.w, layer.mu_w, layer.sigma_w) +
         log_gaussian(layer.b, layer.mu_b, layer.sigma_b);
}

Var kl_estimate(const std::vector<VarDenseVars>& layers, const PriorVars& prior,
                PriorMode mode) {
  if (layers.empty()) throw std::invalid_argument("kl_estimate: no layers");
  Var acc = log_posterior_term(layers[0]) - log_prior_term(layers[0].w, prior, mode) -
            log_prior_term(layers[0].b, prior, mode);
  for (size_t i = 1; i < layers.size(); ++i)
    acc = acc + log_posterior_term(layers[i]) -
          log_prior_term(layers[i].w, prior, mode) -
          log_prior_term(layers[i].b, prior, mode);
  return acc;
}

}  // namespace vgnn
