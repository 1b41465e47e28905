#include "vgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vgnn {

PredictiveField predict(const Graph& graph, ModelState& state, int samples,
                        Rng& rng, double z) {
  if (samples < 2)
    throw std::invalid_argument("predict: need at least 2 samples for a variance");

  Tape tape;
  // One deterministic pass for the latent state; stochasticity lives in the
  // decoder only.
  ForwardVars base = model_forward(tape, state, graph, zero_decoder_noise(state));

  const Eigen::Index n = tape.value(base.mu).rows();
  const Eigen::Index t = tape.value(base.mu).cols();
  Matrix mean_acc = Matrix::Zero(n, t);
  Matrix mean_sq_acc = Matrix::Zero(n, t);
  Matrix var_acc = Matrix::Zero(n, t);
  Trainables scratch;
  for (int s = 0; s < samples; ++s) {
    DecoderNoise noise = draw_decoder_noise(state, rng);
    DecodeVars dv = model_decode(tape, scratch, state, base.v_latent, noise);
    const Matrix& mu = tape.value(dv.mu);
    const Matrix& sg = tape.value(dv.sigma);
    mean_acc += mu;
    mean_sq_acc += mu.cwiseProduct(mu);
    var_acc += sg.cwiseProduct(sg);
  }

  PredictiveField out;
  out.z = z;
  out.mean = mean_acc / samples;
  // unbiased variance of the sampled means
  Matrix se2 = (mean_sq_acc - samples * out.mean.cwiseProduct(out.mean)) /
               (samples - 1);
  se2 = se2.cwiseMax(0.0);
  const double noise2 = state.sigma_noise() * state.sigma_noise();
  Matrix sa2 = (var_acc / samples).array() + noise2;
  out.s_e = se2.cwiseSqrt();
  out.s_a = sa2.cwiseSqrt();
  out.s_t = (se2 + sa2).cwiseSqrt();
  out.lower = out.mean - z * out.s_t;
  out.upper = out.mean + z * out.s_t;
  return out;
}

double rrmse(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw std::invalid_argument("rrmse: shape mismatch " + shape_str(pred) +
                                " vs " + shape_str(truth));
  const double tn = truth.norm();
  if (tn == 0.0) throw std::invalid_argument("rrmse: truth has zero norm");
  return (pred - truth).norm() / tn;
}

double coverage(const std::vector<PredictiveField>& fields,
                const std::vector<Matrix>& truths, double z) {
  if (fields.size() != truths.size())
    throw std::invalid_argument("coverage: list length mismatch");
  long inside = 0, total = 0;
  for (size_t s = 0; s < fields.size(); ++s) {
    const Matrix lo = fields[s].mean - z * fields[s].s_t;
    const Matrix hi = fields[s].mean + z * fields[s].s_t;
    const Matrix& y = truths[s];
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      inside += (y(i) >= lo(i) && y(i) <= hi(i)) ? 1 : 0;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(inside) / total : 0.0;
}

MetricReport evaluate(const Dataset& dataset, ModelState& state, int samples,
                      std::uint64_t seed, std::vector<PredictiveField>* fields_out) {
  MetricReport report;
  std::vector<PredictiveField> fields;
  std::vector<Matrix> truths;
  Graph base = build_graph(dataset.mesh);
  Rng rng(seed);
  for (const Simulation& sim : dataset.sims) {
    Graph g = base;
    set_node_features(g, dataset.mesh, sim.u);
    PredictiveField f = predict(g, state, samples, rng);
    report.rrmse_per_sim.push_back(rrmse(f.mean, sim.y));
    truths.push_back(sim.y);
    fields.push_back(std::move(f));
  }
  const auto& r = report.rrmse_per_sim;
  if (!r.empty()) {
    report.rrmse_mean = std::accumulate(r.begin(), r.end(), 0.0) / r.size();
    std::vector<double> sorted = r;
    std::sort(sorted.begin(), sorted.end());
    const size_t mid = sorted.size() / 2;
    report.rrmse_median = sorted.size() % 2 ? sorted[mid]
                                            : 0.5 * (sorted[mid - 1] + sorted[mid]);
  }
  report.coverage_z2 = coverage(fields, truths, 2.0);
  if (fields_out) *fields_out = std::move(fields);
  return report;
}

}  // namespace vgnn
