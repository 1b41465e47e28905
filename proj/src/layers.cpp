#include "vgnn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace vgnn {

Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  // fan_in = cols, fan_out = rows for a (out x in) weight
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  return m;
}

DenseParams make_dense(int in, int out, Rng& rng) {
  return {glorot_uniform(out, in, rng), Matrix::Zero(1, out)};
}

Var dense_forward(Var x, Var W, Var b) { return affine(x, W, b); }

MlpBlock make_mlp(int in, int hidden, int out, bool final_linear, Rng& rng) {
  MlpBlock block;
  block.final_linear = final_linear;
  block.layers.push_back(make_dense(in, hidden, rng));
  block.layers.push_back(make_dense(hidden, hidden, rng));
  block.layers.push_back(make_dense(hidden, out, rng));
  return block;
}

MlpVars bind_mlp(Tape& tape, Trainables& out, const std::string& prefix,
                 MlpBlock& block) {
  MlpVars vars;
  vars.final_linear = block.final_linear;
  for (size_t l = 0; l < block.layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    vars.W.push_back(bind_param(tape, out, base + ".W", block.layers[l].W));
    vars.b.push_back(bind_param(tape, out, base + ".b", block.layers[l].b));
  }
  return vars;
}

Var mlp_forward(const MlpVars& mlp, Var x) {
  Var h = x;
  for (size_t l = 0; l < mlp.W.size(); ++l) {
    h = dense_forward(h, mlp.W[l], mlp.b[l]);
    const bool last = (l + 1 == mlp.W.size());
    if (!last || !mlp.final_linear) h = swish(h);
  }
  return h;
}

long mlp_param_count(const MlpBlock& block) {
  long n = 0;
  for (const auto& layer : block.layers) n += layer.W.size() + layer.b.size();
  return n;
}

}  // namespace vgnn
