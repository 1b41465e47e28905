#include "vgnn/datagen.hpp"

#include "vgnn/variational.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>

namespace vgnn {

Mesh make_grid_mesh(int nx, int ny, double Lx, double Ly) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid mesh needs nx, ny >= 2");
  Mesh mesh;
  mesh.coords.resize(static_cast<Eigen::Index>(nx) * ny, 2);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const int id = iy * nx + ix;
      mesh.coords(id, 0) = Lx * ix / (nx - 1);
      mesh.coords(id, 1) = Ly * iy / (ny - 1);
    }
  for (int iy = 0; iy + 1 < ny; ++iy)
    for (int ix = 0; ix + 1 < nx; ++ix) {
      const int a = iy * nx + ix;
      mesh.elements.push_back({a, a + 1, a + 1 + nx, a + nx});
    }
  return mesh;
}

GpSampler::GpSampler(const Matrix& coords, double length_scale, double jitter) {
  if (length_scale <= 0) throw std::invalid_argument("GP length scale must be > 0");
  if (jitter < 0) throw std::invalid_argument("GP jitter must be >= 0");
  const Eigen::Index n = coords.rows();
  Matrix K(n, n);
  const double inv2l2 = 1.0 / (2.0 * length_scale * length_scale);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d2 = (coords.row(i) - coords.row(j)).squaredNorm();
      K(i, j) = K(j, i) = std::exp(-d2 * inv2l2);
    }
  double jit = jitter;
  while (true) {
    Eigen::LLT<Matrix> llt(K + jit * Matrix::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
      return;
    }
    if (jit == 0.0) jit = 1e-12;
    jit *= 10.0;
    if (jit > 1e-6)
      throw std::runtime_error("GP kernel Cholesky failed even at jitter 1e-6");
  }
}

Vector GpSampler::draw(Rng& rng) const {
  Matrix z = normal_matrix(chol_.rows(), 1, rng);
  return chol_ * z;
}

GpField sample_gp_field(const GpSampler& sampler, const GpFieldConfig& cfg, Rng& rng) {
  GpField field;
  field.g = sampler.draw(rng);
  field.E = cfg.alpha + cfg.gamma * field.g.array().exp();
  return field;
}

namespace {

// Plane-stress constitutive matrix (unit thickness).
Eigen::Matrix3d plane_stress_d(double E, double nu) {
  Eigen::Matrix3d D;
  const double c = E / (1.0 - nu * nu);
  D << c, c * nu, 0, c * nu, c, 0, 0, 0, c * (1.0 - nu) / 2.0;
  return D;
}

// 8x8 Q4 stiffness, 2x2 Gauss quadrature.
Eigen::Matrix<double, 8, 8> q4_stiffness(const Eigen::Matrix<double, 4, 2>& xy,
                                         const Eigen::Matrix3d& D) {
  Eigen::Matrix<double, 8, 8> ke = Eigen::Matrix<double, 8, 8>::Zero();
  const double gp = 1.0 / std::sqrt(3.0);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double xi = (a == 0 ? -gp : gp), eta = (b == 0 ? -gp : gp);
      Eigen::Matrix<double, 4, 2> dN;  // dN/dxi, dN/deta
      dN << -(1 - eta), -(1 - xi), (1 - eta), -(1 + xi), (1 + eta), (1 + xi),
          -(1 + eta), (1 - xi);
      dN *= 0.25;
      Eigen::Matrix2d J = dN.transpose() * xy;
      const double detJ = J.determinant();
      if (detJ <= 0) throw std::runtime_error("FEM: non-positive Jacobian");
      Eigen::Matrix<double, 4, 2> dNxy = dN * J.inverse().transpose();
      Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
      for (int k = 0; k < 4; ++k) {
        B(0, 2 * k) = dNxy(k, 0);
        B(1, 2 * k + 1) = dNxy(k, 1);
        B(2, 2 * k) = dNxy(k, 1);
        B(2, 2 * k + 1) = dNxy(k, 0);
      }
      ke += B.transpose() * D * B * detJ;
    }
  return ke;
}

}  // namespace

FemSolution solve_plane_stress(const Mesh& mesh, const Vector& E_nodal, double nu,
                               const std::vector<std::pair<int, double>>& fixed_dofs,
                               const Vector& f) {
  const int n = mesh.n_nodes();
  const int ndof = 2 * n;
  if (E_nodal.size() != n)
    throw std::invalid_argument("solve_plane_stress: E field size mismatch");
  if ((E_nodal.array() <= 0.0).any())
    throw std::invalid_argument("solve_plane_stress: E must be positive");
  if (f.size() != ndof)
    throw std::invalid_argument("solve_plane_stress: load vector size mismatch");
  if (nu <= 0.0 || nu >= 0.5)
    throw std::invalid_argument("solve_plane_stress: nu must be in (0, 0.5)");

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.elements.size() * 64);
  for (const auto& el : mesh.elements) {
    Eigen::Matrix<double, 4, 2> xy;
    double Ee = 0;
    for (int k = 0; k < 4; ++k) {
      xy.row(k) = mesh.coords.row(el[k]);
      Ee += E_nodal(el[k]);
    }
    Ee /= 4.0;  // element E = mean of its nodal values
    auto ke = q4_stiffness(xy, plane_stress_d(Ee, nu));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        for (int rc = 0; rc < 2; ++rc)
          for (int cc = 0; cc < 2; ++cc)
            trips.emplace_back(2 * el[r] + rc, 2 * el[c] + cc,
                               ke(2 * r + rc, 2 * c + cc));
  }
  Eigen::SparseMatrix<double> K(ndof, ndof);
  K.setFromTriplets(trips.begin(), trips.end());

  std::vector<char> fixed(ndof, 0);
  Vector u_full = Vector::Zero(ndof);
  for (auto [dof, val] : fixed_dofs) {
    if (dof < 0 || dof >= ndof)
      throw std::invalid_argument("solve_plane_stress: fixed dof out of range");
    fixed[dof] = 1;
    u_full(dof) = val;
  }
  std::vector<int> free_of(ndof, -1);
  int nfree = 0;
  for (int d = 0; d < ndof; ++d)
    if (!fixed[d]) free_of[d] = nfree++;
  if (nfree == ndof)
    throw std::invalid_argument("solve_plane_stress: no Dirichlet constraints, system is singular");

  // Reduce to free dofs (all prescribed values are zero in our problems, but
  // the elimination keeps the general u_fixed contribution anyway).
  std::vector<Eigen::Triplet<double>> ftrips;
  Vector rhs = Vector::Zero(nfree);
  for (int d = 0; d < ndof; ++d)
    if (!fixed[d]) rhs(free_of[d]) = f(d);
  for (int col = 0; col < K.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      if (!fixed[r] && !fixed[c])
        ftrips.emplace_back(free_of[r], free_of[c], it.value());
      else if (!fixed[r] && fixed[c])
        rhs(free_of[r]) -= it.value() * u_full(c);
    }
  Eigen::SparseMatrix<double> Kff(nfree, nfree);
  Kff.setFromTriplets(ftrips.begin(), ftrips.end());

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(Kff);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error(
        "solve_plane_stress: stiffness factorization failed; check boundary conditions");
  Vector uf = solver.solve(rhs);

  for (int d = 0; d < ndof; ++d)
    if (!fixed[d]) u_full(d) = uf(free_of[d]);

  FemSolution sol;
  sol.u.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    sol.u(i, 0) = u_full(2 * i);
    sol.u(i, 1) = u_full(2 * i + 1);
  }
  Vector r_all = K * u_full - f;
  sol.reactions = r_all;
  double rfree = 0;
  for (int d = 0; d < ndof; ++d)
    if (!fixed[d]) rfree += r_all(d) * r_all(d);
  const double fn = f.norm();
  sol.residual = fn > 0 ? std::sqrt(rfree) / fn : std::sqrt(rfree);
  return sol;
}

PlateProblem make_plate_problem(int grid, double traction, double nu, double L) {
  PlateProblem p;
  p.mesh = make_grid_mesh(grid, grid, L, L);
  p.traction_sigma_x = traction;
  p.nu = nu;
  const int nx = grid, ny = grid;
  for (int iy = 0; iy < ny; ++iy) {
    const int node = iy * nx;  // left edge
    p.mesh.gamma_u.push_back(node);
    p.fixed_dofs.push_back({2 * node, 0.0});  // u_x = 0
  }
  p.fixed_dofs.push_back({1, 0.0});  // origin node (id 0): u_y = 0 as well
  p.f = Vector::Zero(2 * p.mesh.n_nodes());
  const double h = L / (ny - 1);
  for (int iy = 0; iy < ny; ++iy) {
    const int node = iy * nx + (nx - 1);  // right edge
    p.mesh.gamma_t.push_back(node);
    const double share = (iy == 0 || iy == ny - 1) ? 0.5 : 1.0;
    p.f(2 * node) += traction * h * share;
  }
  return p;
}

FemSolution solve_plate(const PlateProblem& problem, const Vector& E_nodal) {
  return solve_plane_stress(problem.mesh, E_nodal, problem.nu, problem.fixed_dofs,
                            problem.f);
}

Dataset generate_plate_dataset(const GpFieldConfig& cfg, int n_sims,
                               std::uint64_t seed, double traction, double nu) {
  PlateProblem problem = make_plate_problem(cfg.grid, traction, nu, cfg.L);
  GpSampler sampler(problem.mesh.coords, cfg.length_scale, cfg.jitter);
  Dataset ds;
  ds.mesh = problem.mesh;
  ds.sims.reserve(n_sims);
  for (int s = 0; s < n_sims; ++s) {
    // per-simulation derived seed so regeneration is order-independent
    Rng rng(seed ^ static_cast<std::uint64_t>(s));
    GpField field = sample_gp_field(sampler, cfg, rng);
    FemSolution sol = solve_plate(problem, field.E);
    Simulation sim;
    sim.u = sol.u;
    sim.y = field.E;
    sim.meta["sim_index"] = s;
    ds.sims.push_back(std::move(sim));
  }
  return ds;
}

std::vector<int> beam_load_positions(const BeamConfig& cfg) {
  // top-edge nodes, rightmost n_positions (keeps clear of the fixed end)
  std::vector<int> pos;
  const int top_row = (cfg.ny - 1) * cfg.nx;
  for (int k = cfg.nx - cfg.n_positions; k < cfg.nx; ++k)
    pos.push_back(top_row + k);
  if (static_cast<int>(pos.size()) != cfg.n_positions || pos.front() <= top_row)
    throw std::invalid_argument("beam config: n_positions does not fit the top edge");
  return pos;
}

Dataset generate_beam_dataset(const BeamConfig& cfg) {
  Mesh mesh = make_grid_mesh(cfg.nx, cfg.ny, cfg.length, cfg.height);
  std::vector<std::pair<int, double>> fixed;
  for (int iy = 0; iy < cfg.ny; ++iy) {
    const int node = iy * cfg.nx;
    mesh.gamma_u.push_back(node);
    fixed.push_back({2 * node, 0.0});
    fixed.push_back({2 * node + 1, 0.0});
  }
  const std::vector<int> positions = beam_load_positions(cfg);
  for (int node : positions) mesh.gamma_t.push_back(node);

  const Vector E_nodal = Vector::Constant(mesh.n_nodes(), cfg.E);
  Dataset ds;
  ds.mesh = mesh;
  for (int node : positions) {
    for (double F = cfg.f_min; F <= cfg.f_max + 1e-9; F += cfg.f_step) {
      Vector f = Vector::Zero(2 * mesh.n_nodes());
      f(2 * node + 1) = -F;
      FemSolution sol = solve_plane_stress(mesh, E_nodal, cfg.nu, fixed, f);
      Simulation sim;
      sim.u = sol.u;
      sim.y = Matrix::Zero(mesh.n_nodes(), 2);
      sim.y(node, 1) = -F;
      sim.meta["load_node"] = node;
      sim.meta["F"] = F;
      ds.sims.push_back(std::move(sim));
    }
  }
  return ds;
}

}  // namespace vgnn
