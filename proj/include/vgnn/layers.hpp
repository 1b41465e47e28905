// Deterministic dense layers and the 3-layer Swish MLP blocks used by the
// encoder and processor.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "vgnn/tensor.hpp"

namespace vgnn {

using Rng = std::mt19937_64;

// A trainable parameter bound onto the current tape. After backward() the
// optimizer reads tape->grad(var) and writes back into *storage.
struct TrainableRef {
  std::string name;
  Matrix* storage = nullptr;
  Var var;
};

using Trainables = std::vector<TrainableRef>;

inline Var bind_param(Tape& tape, Trainables& out, const std::string& name,
                      Matrix& storage) {
  Var v = tape.leaf(storage, true);
  out.push_back({name, &storage, v});
  return v;
}

struct DenseParams {
  Matrix W;  // out x in
  Matrix b;  // 1 x out
};

Matrix glorot_uniform(int rows, int cols, Rng& rng);
DenseParams make_dense(int in, int out, Rng& rng);

// x (n x in) -> x W^T + b (n x out)
Var dense_forward(Var x, Var W, Var b);

struct MlpBlock {
  std::vector<DenseParams> layers;
  bool final_linear = false;  // processor MLPs end in a linear layer
};

// 3 layers: in -> hidden -> hidden -> out, Swish activations.
MlpBlock make_mlp(int in, int hidden, int out, bool final_linear, Rng& rng);

struct MlpVars {
  std::vector<Var> W, b;
  bool final_linear = false;
};

MlpVars bind_mlp(Tape& tape, Trainables& out, const std::string& prefix,
                 MlpBlock& block);

Var mlp_forward(const MlpVars& mlp, Var x);

// Parameter count incl. biases, for hyperparameter bookkeeping.
long mlp_param_count(const MlpBlock& block);

}  // namespace vgnn
