#include "vgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace vgnn {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;
}

double beta_schedule(int i, int M) {
  if (M < 1) throw std::invalid_argument("beta_schedule: M must be >= 1");
  if (i < 1 || i > M) throw std::invalid_argument("beta_schedule: i out of [1,M]");
  // 2^(M-i) / (2^M - 1), written to stay finite for any M
  return std::exp2(static_cast<double>(M - i)) /
         (std::exp2(static_cast<double>(M)) - 1.0);
}

Var nll_loss(Var mu, Var sigma_pred, Var sigma_noise, const Matrix& y,
             NoiseMode mode) {
  Tape& t = *mu.tape;
  if (!y.allFinite() || !t.value(mu).allFinite() || !t.value(sigma_pred).allFinite())
    throw std::invalid_argument("nll_loss: non-finite inputs");
  if (y.rows() != t.value(mu).rows() || y.cols() != t.value(mu).cols())
    throw std::invalid_argument("nll_loss: target is " + shape_str(y) +
                                ", prediction is " + shape_str(t.value(mu)));
  Var s2 = [&] {
    switch (mode) {
      case NoiseMode::kPerNode:
        return square(sigma_pred);
      case NoiseMode::kGlobal:
        return square(sigma_noise);
      default:
        return square(sigma_pred) + square(sigma_noise);
    }
  }();
  Var diff = t.constant(y) - mu;
  Var per = square(diff) / (s2 * 2.0) + log(s2) * 0.5 + kHalfLog2Pi;
  if (mode == NoiseMode::kGlobal) {
    // s2 is 1x1; spread the log and constant terms over every element
    Var zeros = t.constant(Matrix::Zero(y.rows(), y.cols()));
    per = zeros + per;
  }
  return sum(per);
}

ElboParts elbo_loss(Tape& tape, ModelState& state, const Graph& graph,
                    const Matrix& y, double beta, const DecoderNoise& noise,
                    NoiseMode mode) {
  ForwardVars fv = model_forward(tape, state, graph, noise);
  Var nll = nll_loss(fv.mu, fv.sigma, fv.sigma_noise, y, mode);
  Var kl = kl_estimate(fv.var_layers, fv.prior, state.cfg.prior_mode);
  ElboParts parts;
  parts.loss = nll + beta * kl;
  parts.nll = tape.value(nll)(0, 0);
  parts.kl = tape.value(kl)(0, 0);
  parts.beta_kl = beta * parts.kl;
  parts.total = tape.value(parts.loss)(0, 0);
  parts.trainables = std::move(fv.trainables);
  return parts;
}

void adam_step(Matrix& param, const Matrix& grad, AdamMoments& mom, long t,
               double lr, double beta1, double beta2, double eps) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols())
    throw std::invalid_argument("adam_step: gradient shape " + shape_str(grad) +
                                " does not match parameter " + shape_str(param));
  if (mom.m.size() == 0) {
    mom.m = Matrix::Zero(param.rows(), param.cols());
    mom.v = Matrix::Zero(param.rows(), param.cols());
  }
  mom.m = beta1 * mom.m + (1.0 - beta1) * grad;
  mom.v = beta2 * mom.v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  param.array() -= lr * (mom.m.array() / c1) /
                   ((mom.v.array() / c2).sqrt() + eps);
}

namespace {

struct BatchCache {
  // stacked topology per batch size actually used
  std::map<int, Graph> stacked;
  const Graph& get(const Graph& base, int copies) {
    auto it = stacked.find(copies);
    if (it == stacked.end())
      it = stacked.emplace(copies, stack_copies(base, copies)).first;
    return it->second;
  }
};

}  // namespace

void train_in_place(TrainState& ts, const Dataset& dataset, const TrainConfig& tcfg) {
  const int n_sims = static_cast<int>(dataset.sims.size());
  if (n_sims < tcfg.n_batch || tcfg.n_batch < 1)
    throw std::invalid_argument("train: need at least n_batch simulations");
  const int n = dataset.mesh.n_nodes();

  // The mesh is shared across simulations: topology once, features per sim.
  Graph base = build_graph(dataset.mesh);
  std::vector<Matrix> xs(n_sims);
  for (int s = 0; s < n_sims; ++s) {
    Graph g = base;  // cheap: X empty
    set_node_features(g, dataset.mesh, dataset.sims[s].u);
    xs[s] = std::move(g.X);
    if (dataset.sims[s].y.rows() != n)
      throw std::invalid_argument("train: simulation target row count mismatch");
  }
  BatchCache cache;

  Rng rng(tcfg.seed);
  std::vector<int> order(n_sims);
  std::iota(order.begin(), order.end(), 0);
  const int M = (n_sims + tcfg.n_batch - 1) / tcfg.n_batch;
  double lr = tcfg.lr0;

  for (int epoch = 1; epoch <= tcfg.n_epoch; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double e_total = 0, e_nll = 0, e_kl = 0;
    for (int b = 0; b < M; ++b) {
      const int lo = b * tcfg.n_batch;
      const int hi = std::min(lo + tcfg.n_batch, n_sims);
      const int k = hi - lo;
      const Graph& topo = cache.get(base, k);
      Graph g = topo;
      g.X.resize(static_cast<Eigen::Index>(k) * n, xs[0].cols());
      Matrix y(static_cast<Eigen::Index>(k) * n, dataset.sims[0].y.cols());
      for (int c = 0; c < k; ++c) {
        g.X.middleRows(static_cast<Eigen::Index>(c) * n, n) = xs[order[lo + c]];
        y.middleRows(static_cast<Eigen::Index>(c) * n, n) = dataset.sims[order[lo + c]].y;
      }

      Tape tape;
      DecoderNoise noise = draw_decoder_noise(ts.model, rng);
      ElboParts parts = elbo_loss(tape, ts.model, g, y, beta_schedule(b + 1, M),
                                  noise, tcfg.noise_mode);
      if (!std::isfinite(parts.total)) {
        const char* part = !std::isfinite(parts.nll) ? "nll" : "kl";
        throw TrainError("non-finite loss (part: " + std::string(part) +
                             ") at epoch " + std::to_string(epoch),
                         epoch);
      }
      tape.backward(parts.loss);

      std::vector<Matrix> grads;
      grads.reserve(parts.trainables.size());
      double sq_norm = 0.0;
      for (const TrainableRef& ref : parts.trainables) {
        grads.push_back(tape.grad(ref.var));
        sq_norm += grads.back().squaredNorm();
      }
      const double gnorm = std::sqrt(sq_norm);
      const double scale =
          (tcfg.clip_norm > 0 && gnorm > tcfg.clip_norm) ? tcfg.clip_norm / gnorm : 1.0;

      ++ts.step;
      for (size_t p = 0; p < parts.trainables.size(); ++p) {
        const TrainableRef& ref = parts.trainables[p];
        if (scale != 1.0) grads[p] *= scale;
        adam_step(*ref.storage, grads[p], ts.moments[ref.name], ts.step, lr);
      }
      e_total += parts.total;
      e_nll += parts.nll;
      e_kl += parts.beta_kl;
      ts.steps.push_back({parts.total, parts.nll, parts.beta_kl});
    }
    ts.history.push_back({epoch, e_total / M, e_nll / M, e_kl / M, lr});
    if (tcfg.log_every > 0 && epoch % tcfg.log_every == 0)
      std::printf("epoch %d  total %.6g  nll %.6g  kl %.6g  lr %.3g\n", epoch,
                  e_total / M, e_nll / M, e_kl / M, lr);
    if (tcfg.decay_period > 0 && epoch % tcfg.decay_period == 0) lr *= tcfg.decay;
  }
}

TrainState train(const Dataset& dataset, const ModelConfig& mcfg,
                 const TrainConfig& tcfg) {
  Rng init_rng(tcfg.seed);
  TrainState ts{make_model(mcfg, init_rng)};
  train_in_place(ts, dataset, tcfg);
  return ts;
}

}  // namespace vgnn
