#include "vgnn/model.hpp"

#include <cmath>
#include <stdexcept>

namespace vgnn {

double ModelState::sigma_noise() const {
  const double r = sigma_noise_raw(0, 0);
  return std::max(r, 0.0) + std::log1p(std::exp(-std::abs(r)));
}

void ModelState::for_each_param(
    const std::function<void(const std::string&, Matrix&)>& f) {
  auto visit_mlp = [&](const std::string& prefix, MlpBlock& block) {
    for (size_t l = 0; l < block.layers.size(); ++l) {
      f(prefix + "." + std::to_string(l) + ".W", block.layers[l].W);
      f(prefix + "." + std::to_string(l) + ".b", block.layers[l].b);
    }
  };
  auto visit_var = [&](const std::string& prefix, VariationalParams& vp) {
    f(prefix + ".mu_w", vp.mu_w);
    f(prefix + ".rho_w", vp.rho_w);
    f(prefix + ".mu_b", vp.mu_b);
    f(prefix + ".rho_b", vp.rho_b);
  };
  visit_mlp("enc_node", enc_node);
  visit_mlp("enc_edge", enc_edge);
  for (size_t k = 0; k < phi_e.size(); ++k)
    visit_mlp("phi_e." + std::to_string(k), phi_e[k]);
  for (size_t k = 0; k < phi_v.size(); ++k)
    visit_mlp("phi_v." + std::to_string(k), phi_v[k]);
  for (size_t l = 0; l < dec_trunk.size(); ++l)
    visit_var("dec." + std::to_string(l), dec_trunk[l]);
  visit_var("head_mu", head_mu);
  visit_var("head_sigma", head_sigma);
  f("sigma_noise_raw", sigma_noise_raw);
  f("prior.log_s1", prior.log_s1);
  f("prior.gap_raw", prior.gap_raw);
}

long ModelState::param_count() const {
  long n = 0;
  const_cast<ModelState*>(this)->for_each_param(
      [&](const std::string&, Matrix& m) { n += m.size(); });
  return n;
}

ModelState make_model(const ModelConfig& cfg, Rng& rng) {
  if (cfg.message_passes < 1 || cfg.latent_dim < 1)
    throw std::invalid_argument("model config: message_passes and latent_dim must be >= 1");
  ModelState s;
  s.cfg = cfg;
  const int h = cfg.latent_dim;
  s.enc_node = make_mlp(cfg.node_in, h, h, /*final_linear=*/false, rng);
  s.enc_edge = make_mlp(cfg.edge_in, h, h, /*final_linear=*/false, rng);
  const int n_proc = cfg.share_processor_weights ? 1 : cfg.message_passes;
  for (int k = 0; k < n_proc; ++k) {
    s.phi_e.push_back(make_mlp(3 * h, h, h, /*final_linear=*/true, rng));
    s.phi_v.push_back(make_mlp(2 * h, h, h, /*final_linear=*/true, rng));
  }
  for (int l = 0; l < cfg.decoder_trunk_layers; ++l)
    s.dec_trunk.push_back(make_var_dense(h, h, rng));
  s.head_mu = make_var_dense(h, cfg.out_dim, rng);
  s.head_sigma = make_var_dense(h, cfg.out_dim, rng);
  // softplus(-2.2522) ~= 0.1 initial noise scale
  s.sigma_noise_raw = Matrix::Constant(1, 1, -2.2522);
  s.prior = make_prior();
  return s;
}

DecoderNoise draw_decoder_noise(const ModelState& state, Rng& rng) {
  DecoderNoise n;
  auto add = [&](const VariationalParams& vp) {
    n.eps_w.push_back(normal_matrix(vp.mu_w.rows(), vp.mu_w.cols(), rng));
    n.eps_b.push_back(normal_matrix(vp.mu_b.rows(), vp.mu_b.cols(), rng));
  };
  for (const auto& vp : state.dec_trunk) add(vp);
  add(state.head_mu);
  add(state.head_sigma);
  return n;
}

DecoderNoise zero_decoder_noise(const ModelState& state) {
  DecoderNoise n;
  auto add = [&](const VariationalParams& vp) {
    n.eps_w.push_back(Matrix::Zero(vp.mu_w.rows(), vp.mu_w.cols()));
    n.eps_b.push_back(Matrix::Zero(vp.mu_b.rows(), vp.mu_b.cols()));
  };
  for (const auto& vp : state.dec_trunk) add(vp);
  add(state.head_mu);
  add(state.head_sigma);
  return n;
}

ForwardVars model_forward(Tape& tape, ModelState& state, const Graph& graph,
                          const DecoderNoise& noise) {
  const ModelConfig& cfg = state.cfg;
  if (graph.X.size() == 0)
    throw std::invalid_argument("model_forward: graph has no node features");
  if (graph.X.cols() != cfg.node_in || graph.A.cols() != cfg.edge_in)
    throw std::invalid_argument(
        "model_forward: feature widths (" + std::to_string(graph.X.cols()) + "," +
        std::to_string(graph.A.cols()) + ") do not match config (" +
        std::to_string(cfg.node_in) + "," + std::to_string(cfg.edge_in) + ")");
  if (noise.eps_w.size() != state.dec_trunk.size() + 2)
    throw std::invalid_argument("model_forward: decoder noise has wrong layer count");

  ForwardVars fv;
  fv.prior = bind_prior(tape, fv.trainables, state.prior);
  Var noise_raw = bind_param(tape, fv.trainables, "sigma_noise_raw",
                             state.sigma_noise_raw);
  fv.sigma_noise = softplus(noise_raw);

  // Encoder
  MlpVars enc_n = bind_mlp(tape, fv.trainables, "enc_node", state.enc_node);
  MlpVars enc_e = bind_mlp(tape, fv.trainables, "enc_edge", state.enc_edge);
  Var v = mlp_forward(enc_n, tape.constant(graph.X));
  Var e = mlp_forward(enc_e, tape.constant(graph.A));

  // Processor: residual edge update, scatter-add aggregation over incoming
  // edges (self-loops included), residual node update.
  std::vector<MlpVars> pe, pv;
  for (size_t k = 0; k < state.phi_e.size(); ++k) {
    pe.push_back(bind_mlp(tape, fv.trainables, "phi_e." + std::to_string(k),
                          state.phi_e[k]));
    pv.push_back(bind_mlp(tape, fv.trainables, "phi_v." + std::to_string(k),
                          state.phi_v[k]));
  }
  for (int k = 0; k < cfg.message_passes; ++k) {
    const size_t w = cfg.share_processor_weights ? 0 : static_cast<size_t>(k);
    Var h = swish(edge_affine(v, graph.src, graph.dst, e, pe[w].W[0],
                              pe[w].b[0]));
    for (size_t l = 1; l < pe[w].W.size(); ++l) {
      h = dense_forward(h, pe[w].W[l], pe[w].b[l]);
      if (l + 1 < pe[w].W.size() || !pe[w].final_linear) h = swish(h);
    }
    e = e + h;
    Var msg = scatter_add_rows(e, graph.dst, graph.n_nodes);
    v = v + mlp_forward(pv[w], hcat({v, msg}));
  }
  fv.v_latent = v;
  fv.e_latent = e;

  DecodeVars dv = model_decode(tape, fv.trainables, state, v, noise);
  fv.var_layers = std::move(dv.var_layers);
  fv.mu = dv.mu;
  fv.sigma = dv.sigma;
  return fv;
}

DecodeVars model_decode(Tape& tape, Trainables& trainables, ModelState& state,
                        Var v_latent, const DecoderNoise& noise) {
  if (noise.eps_w.size() != state.dec_trunk.size() + 2)
    throw std::invalid_argument("model_decode: decoder noise has wrong layer count");
  DecodeVars dv;
  Var h = v_latent;
  size_t li = 0;
  for (size_t l = 0; l < state.dec_trunk.size(); ++l, ++li) {
    VarDenseVars lv = bind_var_dense(tape, trainables, "dec." + std::to_string(l),
                                     state.dec_trunk[l], noise.eps_w[li],
                                     noise.eps_b[li]);
    h = swish(dense_forward(h, lv.w, lv.b));
    dv.var_layers.push_back(std::move(lv));
  }
  VarDenseVars hm = bind_var_dense(tape, trainables, "head_mu", state.head_mu,
                                   noise.eps_w[li], noise.eps_b[li]);
  ++li;
  VarDenseVars hs = bind_var_dense(tape, trainables, "head_sigma",
                                   state.head_sigma, noise.eps_w[li], noise.eps_b[li]);
  dv.mu = dense_forward(h, hm.w, hm.b);
  dv.sigma = softplus(dense_forward(h, hs.w, hs.b)) + state.cfg.sigma_floor;
  dv.var_layers.push_back(std::move(hm));
  dv.var_layers.push_back(std::move(hs));
  return dv;
}

}  // namespace vgnn
