// Posterior-predictive sampling, epistemic/aleatoric decomposition, and the
// error / calibration diagnostics reported by the CLI.

#pragma once

#include <vector>

#include "vgnn/model.hpp"

namespace vgnn {

struct PredictiveField {
  Matrix mean;   // n x t, average of sampled predictive means
  Matrix s_a;    // aleatoric std: sqrt(mean sampled sigma^2 + sigma_noise^2)
  Matrix s_e;    // epistemic std: spread of the sampled means
  Matrix s_t;    // total, s_t^2 = s_a^2 + s_e^2
  Matrix lower;  // mean -/+ z * s_t
  Matrix upper;
  double z = 2.0;
};

// Draws S decoder weight samples over one shared encoder/processor pass.
PredictiveField predict(const Graph& graph, ModelState& state, int samples,
                        Rng& rng, double z = 2.0);

// ||pred - truth|| / ||truth|| over all nodes and components.
double rrmse(const Matrix& pred, const Matrix& truth);

// Fraction of entries with truth inside mean +/- z * s_t.
double coverage(const std::vector<PredictiveField>& fields,
                const std::vector<Matrix>& truths, double z = 2.0);

struct MetricReport {
  std::vector<double> rrmse_per_sim;
  double rrmse_mean = 0;
  double rrmse_median = 0;
  double coverage_z2 = 0;
};

MetricReport evaluate(const Dataset& dataset, ModelState& state, int samples,
                      std::uint64_t seed,
                      std::vector<PredictiveField>* fields_out = nullptr);

}  // namespace vgnn
