// Bayes-by-backprop building blocks: variational dense layers with
// reparameterized weight sampling, diagonal Gaussian posterior log-density,
// and the zero-mean scale-mixture prior.

#pragma once

#include <vector>

#include "vgnn/layers.hpp"
#include "vgnn/tensor.hpp"

namespace vgnn {

enum class PriorMode {
  kMixture,       // log of the mixture density (Bayes-by-backprop form)
  kPaperLiteral,  // weighted sum of log-densities
};

// Learnable posterior of one variational dense layer; sigma = softplus(rho).
struct VariationalParams {
  Matrix mu_w, rho_w;  // out x in
  Matrix mu_b, rho_b;  // 1 x out
};

VariationalParams make_var_dense(int in, int out, Rng& rng,
                                 double rho_init = -5.0);

// pi_w fixed at 1/2 (configurable); sigma1 = exp(log_s1) and
// sigma2 = exp(log_s1 - softplus(gap_raw)), so sigma1 >= sigma2 by
// construction while both stay trainable and unconstrained.
struct ScaleMixturePrior {
  double pi_w = 0.5;
  Matrix log_s1;   // 1x1
  Matrix gap_raw;  // 1x1

  double sigma1() const { return std::exp(log_s1(0, 0)); }
  double sigma2() const;
};

// Initialized to the paper's sigma1 = 1/e, sigma2 = 1/e^2.
ScaleMixturePrior make_prior(double sigma1 = std::exp(-1.0),
                             double sigma2 = std::exp(-2.0), double pi_w = 0.5);

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// One layer bound onto a tape with a pinned epsilon draw. Gradients flow to
// mu and rho; eps is a constant.
struct VarDenseVars {
  Var mu_w, rho_w, mu_b, rho_b;
  Var sigma_w, sigma_b;
  Var w, b;  // w = mu + softplus(rho) .* eps
  Matrix eps_w, eps_b;
};

VarDenseVars bind_var_dense(Tape& tape, Trainables& out, const std::string& prefix,
                            VariationalParams& vp, Matrix eps_w, Matrix eps_b);

// Fresh standard-normal draws shaped like vp.
VarDenseVars bind_var_dense_sampled(Tape& tape, Trainables& out,
                                    const std::string& prefix,
                                    VariationalParams& vp, Rng& rng);

struct PriorVars {
  double pi_w = 0.5;
  Var log_s1, gap_raw;
  Var sigma1, sigma2;
};

PriorVars bind_prior(Tape& tape, Trainables& out, ScaleMixturePrior& prior);

// log N(x | mu, sigma) summed over all elements; sigma broadcastable.
Var log_gaussian(Var x, Var mu, Var sigma);
double log_gaussian(const Matrix& x, const Matrix& mu, double sigma);

// Scale-mixture prior log-density of one tensor of sampled weights.
Var log_prior_term(Var w, const PriorVars& prior, PriorMode mode);
double log_prior_term(const Matrix& w, const ScaleMixturePrior& prior,
                      PriorMode mode);

// Posterior log-density of the layer's own sample.
Var log_posterior_term(const VarDenseVars& layer);

// Single-sample Monte-Carlo estimate of D_KL[Q || P] for a stack of layers.
Var kl_estimate(const std::vector<VarDenseVars>& layers, const PriorVars& prior,
                PriorMode mode);

}  // namespace vgnn
