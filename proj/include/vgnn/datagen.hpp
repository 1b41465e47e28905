// Synthetic data generation: Gaussian-process modulus fields, a bilinear-quad
// plane-stress FEM solver, and the plate / cantilever-beam dataset builders.

#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "vgnn/graph.hpp"
#include "vgnn/layers.hpp"

namespace vgnn {

using Vector = Eigen::VectorXd;

// Structured quad grid on [0,Lx] x [0,Ly]; nx, ny are node counts per side.
// Node id = iy * nx + ix.
Mesh make_grid_mesh(int nx, int ny, double Lx, double Ly);

struct GpFieldConfig {
  int grid = 12;             // nodes per side, square domain
  double L = 1.0;
  double alpha = 1.0;        // E = alpha + gamma * exp(g)
  double gamma = 1.0;
  double length_scale = 1.0;
  double jitter = 1e-10;
};

// Zero-mean GP with squared-exponential kernel over fixed sample points.
// The Cholesky factor is computed once and reused across draws.
class GpSampler {
 public:
  GpSampler(const Matrix& coords, double length_scale, double jitter);
  Vector draw(Rng& rng) const;

 private:
  Matrix chol_;  // lower factor of K + jitter*I
};

struct GpField {
  Vector g, E;
};

GpField sample_gp_field(const GpSampler& sampler, const GpFieldConfig& cfg, Rng& rng);

// Plane-stress solve on a quad mesh. E is nodal (element value = mean of its
// 4 nodes); fixed_dofs are (2*node+comp, value) pairs; f is the global load
// vector (2n). Returns the n x 2 displacement field.
struct FemSolution {
  Matrix u;            // n x 2
  double residual = 0; // ||K u - f|| over free dofs, relative to ||f||
  Vector reactions;    // K u - f at all dofs (nonzero only where constrained)
};

FemSolution solve_plane_stress(const Mesh& mesh, const Vector& E_nodal, double nu,
                               const std::vector<std::pair<int, double>>& fixed_dofs,
                               const Vector& f);

// Square plate, left edge u_x = 0 (origin fully fixed), tensile sigma_x on
// the right edge.
struct PlateProblem {
  Mesh mesh;
  double traction_sigma_x = 1.5;
  double nu = 0.3;
  std::vector<std::pair<int, double>> fixed_dofs;
  Vector f;  // consistent nodal traction
};

PlateProblem make_plate_problem(int grid, double traction = 1.5, double nu = 0.3,
                                double L = 1.0);

FemSolution solve_plate(const PlateProblem& problem, const Vector& E_nodal);

// n_sims independent GP modulus fields, each solved to (u, E) pairs.
Dataset generate_plate_dataset(const GpFieldConfig& cfg, int n_sims,
                               std::uint64_t seed, double traction = 1.5,
                               double nu = 0.3);

// 2D cantilever: left edge fully fixed, one downward nodal load on the top
// edge. Positions run along the top edge away from the fixed end.
struct BeamConfig {
  int nx = 21, ny = 6;
  double length = 40.0, height = 10.0;
  double E = 5000.0;
  double nu = 0.3;
  int n_positions = 13;      // rightmost top-edge nodes
  double f_min = 5.0, f_max = 100.0, f_step = 5.0;
};

Dataset generate_beam_dataset(const BeamConfig& cfg);

// Admissible loaded top-edge node ids for a beam config, left to right.
std::vector<int> beam_load_positions(const BeamConfig& cfg);

}  // namespace vgnn
