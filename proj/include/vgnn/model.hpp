// The node-wise predictive model: deterministic encoder and message-passing
// processor, variational decoder with mean and std heads, and a learnable
// global noise scale.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vgnn/graph.hpp"
#include "vgnn/layers.hpp"
#include "vgnn/variational.hpp"

namespace vgnn {

struct ModelConfig {
  int latent_dim = 25;
  int message_passes = 5;
  int node_in = 5;  // 2d+1
  int edge_in = 3;  // d+1
  int out_dim = 1;
  int decoder_trunk_layers = 2;
  PriorMode prior_mode = PriorMode::kMixture;
  bool share_processor_weights = true;
  double sigma_floor = 1e-6;
};

struct ModelState {
  ModelConfig cfg;
  MlpBlock enc_node, enc_edge;
  // One phi_e/phi_v pair when weights are shared, message_passes pairs
  // otherwise.
  std::vector<MlpBlock> phi_e, phi_v;
  std::vector<VariationalParams> dec_trunk;
  VariationalParams head_mu, head_sigma;
  Matrix sigma_noise_raw;  // 1x1, sigma_noise = softplus(raw)
  ScaleMixturePrior prior;

  double sigma_noise() const;
  long param_count() const;
  // Every trainable tensor, in a fixed deterministic order.
  void for_each_param(const std::function<void(const std::string&, Matrix&)>& f);
};

ModelState make_model(const ModelConfig& cfg, Rng& rng);

// All tape handles produced by one bound forward pass.
struct ForwardVars {
  Trainables trainables;
  PriorVars prior;
  Var sigma_noise;                     // softplus(raw), 1x1
  std::vector<VarDenseVars> var_layers;  // decoder sample
  Var v_latent, e_latent;              // after the processor
  Var mu, sigma;                       // n x t each, sigma > 0
};

// Pinned decoder noise for reproducible passes; empty -> draw from rng,
// eps of all zeros -> deterministic (posterior-mean) decode.
struct DecoderNoise {
  std::vector<Matrix> eps_w, eps_b;  // trunk layers, then mu head, then sigma head
};

DecoderNoise draw_decoder_noise(const ModelState& state, Rng& rng);
DecoderNoise zero_decoder_noise(const ModelState& state);

// encode + process + decode on one tape. graph.X must be populated.
ForwardVars model_forward(Tape& tape, ModelState& state, const Graph& graph,
                          const DecoderNoise& noise);

struct DecodeVars {
  std::vector<VarDenseVars> var_layers;
  Var mu, sigma;
};

// Variational decoder alone, applied to an existing latent node state.
// Used to draw many predictive samples without redoing the processor.
DecodeVars model_decode(Tape& tape, Trainables& trainables, ModelState& state,
                        Var v_latent, const DecoderNoise& noise);

}  // namespace vgnn
