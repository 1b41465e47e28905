// ELBO loss assembly, minibatch KL weighting, Adam, and the training loop.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vgnn/model.hpp"

namespace vgnn {

// How the per-node std head and the global noise scale enter the likelihood.
enum class NoiseMode {
  kQuadrature,  // sigma_tot^2 = sigma_pred^2 + sigma_noise^2 (default)
  kPerNode,     // sigma_pred only
  kGlobal,      // sigma_noise only
};

struct TrainConfig {
  int n_epoch = 1500;
  int n_batch = 2;  // full simulations per minibatch
  double lr0 = 1e-3;
  double decay = 0.98;
  int decay_period = 700;  // epochs
  std::uint64_t seed = 0;
  double clip_norm = 10.0;
  NoiseMode noise_mode = NoiseMode::kQuadrature;
  int log_every = 0;  // print progress every k epochs; 0 = silent
};

// beta_i = 2^(M-i) / (2^M - 1), i = 1..M; sums to 1 over one epoch.
double beta_schedule(int i, int M);

// -sum log N(y | mu, sigma_tot). y is observed data, hence constant.
Var nll_loss(Var mu, Var sigma_pred, Var sigma_noise, const Matrix& y,
             NoiseMode mode = NoiseMode::kQuadrature);

struct ElboParts {
  Var loss;
  double total = 0, nll = 0, beta_kl = 0, kl = 0;
  Trainables trainables;  // parameters bound on the tape for this step
};

// One minibatch loss on a stacked graph: NLL + beta * (logPost - logPrior).
ElboParts elbo_loss(Tape& tape, ModelState& state, const Graph& graph,
                    const Matrix& y, double beta, const DecoderNoise& noise,
                    NoiseMode mode = NoiseMode::kQuadrature);

struct AdamMoments {
  Matrix m, v;
};

// Standard Adam with bias correction; t counts from 1.
void adam_step(Matrix& param, const Matrix& grad, AdamMoments& mom, long t,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

struct EpochRecord {
  int epoch = 0;
  double total = 0, nll = 0, kl = 0, lr = 0;  // epoch means; kl is beta-weighted
};

struct StepRecord {
  double total = 0, nll = 0, beta_kl = 0;
};

struct TrainState {
  ModelState model;
  std::map<std::string, AdamMoments> moments;
  long step = 0;
  std::vector<EpochRecord> history;
  std::vector<StepRecord> steps;
};

class TrainError : public std::runtime_error {
 public:
  TrainError(const std::string& msg, int epoch) : std::runtime_error(msg), epoch(epoch) {}
  int epoch;
};

TrainState train(const Dataset& dataset, const ModelConfig& mcfg,
                 const TrainConfig& tcfg);

// Continue training an existing model (used when the caller owns init).
void train_in_place(TrainState& ts, const Dataset& dataset, const TrainConfig& tcfg);

}  // namespace vgnn
