// Mesh-as-graph data model: directed edge lists with self-loops and the
// node/edge input features consumed by the network.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <string>
#include <vector>

#include "vgnn/tensor.hpp"

namespace vgnn {

struct Mesh {
  Matrix coords;                            // n x d, d in {2,3}
  std::vector<std::array<int, 4>> elements; // quadrilaterals (2D generators)
  std::vector<int> gamma_u;                 // Dirichlet boundary node ids
  std::vector<int> gamma_t;                 // traction boundary node ids

  int n_nodes() const { return static_cast<int>(coords.rows()); }
  int dim() const { return static_cast<int>(coords.cols()); }
};

// One experiment: displacement field in, target field out.
struct Simulation {
  Matrix u;  // n x d
  Matrix y;  // n x t
  std::map<std::string, double> meta;
};

struct Dataset {
  Mesh mesh;
  std::vector<Simulation> sims;
};

struct Graph {
  int n_nodes = 0;
  std::vector<int> src;  // directed edges incl. one self-loop per node
  std::vector<int> dst;
  Matrix X;  // n x (2d+1): (u_i, u_mean, gamma_u flag)
  Matrix A;  // n_edges x (d+1): (x_dst - x_src, |x_dst - x_src|); self-loops zero
  int undirected_edges = 0;  // unique mesh element sides

  int n_edges() const { return static_cast<int>(src.size()); }
  // The paper-style count: undirected edges plus self-loops.
  int undirected_plus_self() const { return undirected_edges + n_nodes; }
};

// Topology + edge features only; X is left empty.
Graph build_graph(const Mesh& mesh);

// build_graph plus node features from one simulation.
Graph assemble_features(const Mesh& mesh, const Simulation& sim);

// Fill graph.X in place for a displacement field on the graph's mesh.
void set_node_features(Graph& g, const Mesh& mesh, const Matrix& u);

// Disjoint union of k copies of one graph with per-copy node features,
// used to stack the simulations of a minibatch into one forward pass.
Graph stack_copies(const Graph& g, int copies);

// Hop distances from one node (BFS over the directed edge list, self-loops
// ignored). Unreachable nodes get -1.
std::vector<int> graph_distances(const Graph& g, int start);

}  // namespace vgnn
