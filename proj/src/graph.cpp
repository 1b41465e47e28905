#include "vgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <stdexcept>

namespace vgnn {

namespace {

void check_mesh(const Mesh& mesh) {
  const int n = mesh.n_nodes();
  for (const auto& el : mesh.elements)
    for (int v : el)
      if (v < 0 || v >= n)
        throw std::invalid_argument("mesh element references node " +
                                    std::to_string(v) + " outside [0," +
                                    std::to_string(n) + ")");
  for (int v : mesh.gamma_u)
    if (v < 0 || v >= n) throw std::invalid_argument("gamma_u node out of range");
  for (int v : mesh.gamma_t)
    if (v < 0 || v >= n) throw std::invalid_argument("gamma_t node out of range");
}

void set_edge_features(Graph& g, const Mesh& mesh) {
  const int d = mesh.dim();
  g.A = Matrix::Zero(g.n_edges(), d + 1);
  for (int e = 0; e < g.n_edges(); ++e) {
    if (g.src[e] == g.dst[e]) continue;  // self-loop rows stay zero
    Eigen::RowVectorXd diff = mesh.coords.row(g.dst[e]) - mesh.coords.row(g.src[e]);
    g.A.block(e, 0, 1, d) = diff;
    g.A(e, d) = diff.norm();
  }
}

}  // namespace

Graph build_graph(const Mesh& mesh) {
  check_mesh(mesh);
  Graph g;
  g.n_nodes = mesh.n_nodes();

  std::set<std::pair<int, int>> sides;
  for (const auto& el : mesh.elements) {
    for (int k = 0; k < 4; ++k) {
      int a = el[k], b = el[(k + 1) % 4];
      sides.insert({std::min(a, b), std::max(a, b)});
    }
  }
  g.undirected_edges = static_cast<int>(sides.size());

  g.src.reserve(2 * sides.size() + g.n_nodes);
  g.dst.reserve(2 * sides.size() + g.n_nodes);
  for (const auto& [a, b] : sides) {
    g.src.push_back(a);
    g.dst.push_back(b);
    g.src.push_back(b);
    g.dst.push_back(a);
  }
  for (int i = 0; i < g.n_nodes; ++i) {
    g.src.push_back(i);
    g.dst.push_back(i);
  }
  set_edge_features(g, mesh);
  return g;
}

void set_node_features(Graph& g, const Mesh& mesh, const Matrix& u) {
  const int n = mesh.n_nodes();
  const int d = mesh.dim();
  if (u.rows() != n || u.cols() != d)
    throw std::invalid_argument("displacement field is " + shape_str(u) +
                                ", expected " + std::to_string(n) + "x" +
                                std::to_string(d));
  if (!u.allFinite())
    throw std::invalid_argument("displacement field contains non-finite values");

  Eigen::RowVectorXd u_mean = u.colwise().mean();
  std::vector<char> on_gu(n, 0);
  for (int v : mesh.gamma_u) on_gu[v] = 1;

  g.X = Matrix::Zero(n, 2 * d + 1);
  g.X.leftCols(d) = u;
  g.X.middleCols(d, d) = u_mean.replicate(n, 1);
  for (int i = 0; i < n; ++i) g.X(i, 2 * d) = on_gu[i] ? 1.0 : 0.0;
}

Graph assemble_features(const Mesh& mesh, const Simulation& sim) {
  Graph g = build_graph(mesh);
  if (sim.u.rows() != mesh.n_nodes() || sim.y.rows() != mesh.n_nodes())
    throw std::invalid_argument("simulation fields do not match mesh node count");
  set_node_features(g, mesh, sim.u);
  return g;
}

Graph stack_copies(const Graph& g, int copies) {
  if (copies < 1) throw std::invalid_argument("stack_copies: copies must be >= 1");
  Graph out;
  out.n_nodes = g.n_nodes * copies;
  out.undirected_edges = g.undirected_edges * copies;
  const int ne = g.n_edges();
  out.src.resize(static_cast<size_t>(ne) * copies);
  out.dst.resize(static_cast<size_t>(ne) * copies);
  out.A.resize(static_cast<Eigen::Index>(ne) * copies, g.A.cols());
  for (int c = 0; c < copies; ++c) {
    const int noff = c * g.n_nodes;
    for (int e = 0; e < ne; ++e) {
      out.src[c * ne + e] = g.src[e] + noff;
      out.dst[c * ne + e] = g.dst[e] + noff;
    }
    out.A.middleRows(static_cast<Eigen::Index>(c) * ne, ne) = g.A;
  }
  if (g.X.size() != 0) {
    out.X.resize(static_cast<Eigen::Index>(g.X.rows()) * copies, g.X.cols());
    for (int c = 0; c < copies; ++c)
      out.X.middleRows(static_cast<Eigen::Index>(c) * g.X.rows(), g.X.rows()) = g.X;
  }
  return out;
}

std::vector<int> graph_distances(const Graph& g, int start) {
  std::vector<std::vector<int>> adj(g.n_nodes);
  for (int e = 0; e < g.n_edges(); ++e)
    if (g.src[e] != g.dst[e]) adj[g.src[e]].push_back(g.dst[e]);
  std::vector<int> dist(g.n_nodes, -1);
  std::deque<int> q{start};
  dist[start] = 0;
  while (!q.empty()) {
    int v = q.front();
    q.pop_front();
    for (int w : adj[v])
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push_back(w);
      }
  }
  return dist;
}

}  // namespace vgnn
