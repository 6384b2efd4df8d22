#include <doctest.h>

#include <cmath>
#include <random>

#include "bidhom/fem.hpp"
#include "bidhom/geometry.hpp"

using namespace bidhom;
using fem::Mat;
using fem::Vec;

namespace {

CellGeometry box_cell(int n = 8) {
  CellSpec s;
  s.dim = 2;
  s.resolution = n;
  s.inclusion.kind = InclusionShape::Kind::box;
  s.inclusion.lo = {0.25, 0.25, 0.0};
  s.inclusion.hi = {0.75, 0.75, 0.0};
  return build_unit_cell(s);
}

Mesh plain_square(int n) {
  Mesh m;
  m.dim = 2;
  m.cells_per_side = {n, n, 1};
  m.h = 1.0 / n;
  m.periodic = false;
  m.phase.assign(m.num_cells(), Phase::out);
  return m;
}

}  // namespace

TEST_CASE("Q1 element stiffness matches hand integration (sigma = I, h = 1)") {
  // frozen from exact integration of Q1 basis gradient products
  const double D = 2.0 / 3.0, E = -1.0 / 6.0, C = -1.0 / 3.0;
  double expected[4][4] = {
      {D, E, E, C}, {E, D, C, E}, {E, C, D, E}, {C, E, E, D}};
  Mat K = fem::element_stiffness(2, 1.0, Mat::Identity(2, 2));
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) CHECK(K(a, b) == doctest::Approx(expected[a][b]).epsilon(1e-14));
}

TEST_CASE("element stiffness: kernel and linearity") {
  Mat K1 = fem::element_stiffness(2, 0.125, Mat::Identity(2, 2));
  Vec ones = Vec::Ones(4);
  CHECK((K1 * ones).cwiseAbs().maxCoeff() < 1e-15);
  Mat K2 = fem::element_stiffness(2, 0.125, 2.0 * Mat::Identity(2, 2));
  CHECK((K2 - 2.0 * K1).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("element stiffness rejects non-symmetric coefficient") {
  Mat s(2, 2);
  s << 1.0, 0.5, 0.2, 1.0;
  CHECK_THROWS(fem::element_stiffness(2, 1.0, s));
}

TEST_CASE("assembled stiffness: affine field energy is exact") {
  Mesh mesh = plain_square(8);
  auto map = fem::make_scalar_dofmap(mesh, fem::PhaseSel::both, false);
  Mat sigma(2, 2);
  sigma << 2.0, 0.3, 0.3, 1.5;
  auto K = fem::assemble_stiffness(mesh, map, fem::MatrixField::constant(sigma),
                                   fem::PhaseSel::both);
  CHECK(K.symmetric);
  // u = a . x nodal; u^T K u = sigma a . a over the unit square
  Eigen::Vector2d a(0.7, -1.2);
  Vec u(map.num_dofs);
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    double x[3];
    mesh.node_position(nid, x);
    u[map.dof_B[nid]] = a[0] * x[0] + a[1] * x[1];
  }
  double expected = a.dot(sigma * a);
  CHECK(u.dot(K.mat * u) == doctest::Approx(expected).epsilon(1e-12));
  // constant field lies in the kernel before constraints
  Vec c = Vec::Constant(map.num_dofs, 3.14);
  CHECK((K.mat * c).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("assembled operator is symmetric entrywise") {
  auto cell = box_cell();
  auto map = fem::make_jump_dofmap(cell.mesh, false);
  auto K = fem::assemble_stiffness(cell.mesh, map, fem::MatrixField::scalar(2, 1.0),
                                   fem::PhaseSel::out_only);
  fem::SpMat diff = fem::SpMat(K.mat.transpose()) - K.mat;
  double scale = 0.0;
  for (int k = 0; k < K.mat.outerSize(); ++k)
    for (fem::SpMat::InnerIterator it(K.mat, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  CHECK(diff.coeffs().cwiseAbs().maxCoeff() < 1e-14 * scale);
}

TEST_CASE("parallel assembly merges deterministically") {
  auto cell = box_cell(16);
  auto map = fem::make_scalar_dofmap(cell.mesh, fem::PhaseSel::both, false);
  auto field = fem::MatrixField::scalar(2, 1.7);
  auto K1 = fem::assemble_stiffness(cell.mesh, map, field, fem::PhaseSel::both, 1);
  auto K4 = fem::assemble_stiffness(cell.mesh, map, field, fem::PhaseSel::both, 4);
  fem::SpMat diff = K1.mat - K4.mat;
  double max_diff = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (fem::SpMat::InnerIterator it(diff, k); it; ++it)
      max_diff = std::max(max_diff, std::abs(it.value()));
  CHECK(max_diff == 0.0);  // bitwise identical
}

TEST_CASE("interface mass: constant jump integrates |Gamma|") {
  auto cell = box_cell();
  auto map = fem::make_jump_dofmap(cell.mesh, false);
  auto M = fem::assemble_interface_mass(cell.mesh, map);
  // x with [x] = 1: B trace 1, D trace 0
  Vec x = Vec::Zero(map.num_dofs);
  for (const auto& f : map.iface) x[f.dof_B] = 1.0;
  CHECK(x.dot(M.mat * x) == doctest::Approx(cell.area_gamma).epsilon(1e-14));

  // equal traces: zero jump energy
  Vec y = Vec::Zero(map.num_dofs);
  for (const auto& f : map.iface) {
    y[f.dof_B] = 0.7;
    y[f.dof_D] = 0.7;
  }
  CHECK((M.mat * y).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("interface mass: lumping error against the exact edge integral") {
  // piecewise-linear jump j0 -> j1 on one facet of length h:
  // exact integral of [x]^2 = h/3 (j0^2 + j0 j1 + j1^2)
  // lumped = h/2 (j0^2 + j1^2); difference = h (j0 - j1)^2 / 6
  auto cell = box_cell();
  auto map = fem::make_jump_dofmap(cell.mesh, false);
  auto M = fem::assemble_interface_mass(cell.mesh, map);
  const Facet& f = cell.mesh.facets.front();
  const double j0 = 0.4, j1 = 1.1, h = cell.mesh.h;
  Vec x = Vec::Zero(map.num_dofs);
  x[map.dof_B[f.nodes[0]]] = j0;
  x[map.dof_B[f.nodes[1]]] = j1;
  double lumped = x.dot(M.mat * x);
  // nodes of this facet belong to two adjacent facets each; restrict to the
  // single-facet share by halving the node weights along the interface line
  // -> instead compare directly against per-node weight bookkeeping:
  double w0 = 0, w1 = 0;
  for (const auto& d : map.iface) {
    if (d.node == f.nodes[0]) w0 = d.weight;
    if (d.node == f.nodes[1]) w1 = d.weight;
  }
  CHECK(lumped == doctest::Approx(w0 * j0 * j0 + w1 * j1 * j1).epsilon(1e-14));
  // single-facet lumped vs exact: O(h^2) with the stated constant
  double exact = h / 3.0 * (j0 * j0 + j0 * j1 + j1 * j1);
  double facet_lumped = h / 2.0 * (j0 * j0 + j1 * j1);
  CHECK(facet_lumped - exact == doctest::Approx(h * (j0 - j1) * (j0 - j1) / 6.0).epsilon(1e-12));
}

TEST_CASE("interface mass nonnegativity (random vectors)") {
  auto cell = box_cell();
  auto map = fem::make_jump_dofmap(cell.mesh, false);
  auto M = fem::assemble_interface_mass(cell.mesh, map);
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    Vec x(map.num_dofs);
    for (int i = 0; i < map.num_dofs; ++i) x[i] = g(rng);
    CHECK(x.dot(M.mat * x) >= -1e-14);
  }
}

TEST_CASE("solve_spd: identity system") {
  fem::SparseOperator op;
  op.mat.resize(5, 5);
  op.mat.setIdentity();
  Vec b(5);
  b << 1, -2, 3, 0.5, 4;
  auto [x, rep] = fem::solve_spd(op, b);
  CHECK((x - b).norm() < 1e-12);
}

TEST_CASE("solve_spd: periodic Laplacian vs dense direct oracle") {
  auto cell = box_cell(8);  // periodic mesh, n <= 64
  auto map = fem::make_scalar_dofmap(cell.mesh, fem::PhaseSel::both, false);
  auto K = fem::assemble_stiffness(cell.mesh, map, fem::MatrixField::scalar(2, 1.0),
                                   fem::PhaseSel::both);
  fem::apply_pins(K, map.pins);
  // sinusoidal right-hand side (compatible: sums to zero by symmetry)
  Vec b(map.num_dofs);
  for (int nid = 0; nid < cell.mesh.num_nodes(); ++nid) {
    double x[3];
    cell.mesh.node_position(nid, x);
    b[map.dof_B[nid]] = std::sin(2.0 * M_PI * x[0]);
  }
  for (int p : map.pins) b[p] = 0.0;
  fem::SolveOptions cg_opts;
  auto [x_cg, rep_cg] = fem::solve_spd(K, b, cg_opts);
  fem::SolveOptions d_opts;
  d_opts.method = fem::SolveOptions::direct;
  auto [x_d, rep_d] = fem::solve_spd(K, b, d_opts);
  CHECK((x_cg - x_d).norm() <= 1e-9 * std::max(1.0, x_d.norm()));
  CHECK(rep_d.method == "direct");
}

TEST_CASE("solve_spd: incompatible Neumann data is rejected") {
  auto cell = box_cell(4);
  auto map = fem::make_scalar_dofmap(cell.mesh, fem::PhaseSel::both, false);
  auto K = fem::assemble_stiffness(cell.mesh, map, fem::MatrixField::scalar(2, 1.0),
                                   fem::PhaseSel::both);
  Vec b = Vec::Zero(map.num_dofs);
  b[0] = 1.0;  // component sum = 1
  fem::SolveOptions opts;
  opts.check_neumann_compat = true;
  opts.map = &map;
  CHECK_THROWS(fem::solve_spd(K, b, opts));
}

TEST_CASE("solve_spd: Galerkin residual orthogonality spot check") {
  auto cell = box_cell(8);
  auto map = fem::make_scalar_dofmap(cell.mesh, fem::PhaseSel::both, false);
  auto K = fem::assemble_stiffness(cell.mesh, map, fem::MatrixField::scalar(2, 1.0),
                                   fem::PhaseSel::both);
  for (int i = 0; i < map.num_dofs; ++i) K.mat.coeffRef(i, i) += 1.0;  // make definite
  std::mt19937 rng(11);
  std::normal_distribution<double> g;
  Vec b(map.num_dofs), y(map.num_dofs);
  for (int i = 0; i < map.num_dofs; ++i) {
    b[i] = g(rng);
    y[i] = g(rng);
  }
  y.normalize();
  fem::SolveOptions opts;
  opts.tol = 1e-11;
  auto [x, rep] = fem::solve_spd(K, b, opts);
  Vec r = b - K.mat * x;
  CHECK(std::abs(r.dot(y)) <= 1e-11 * b.norm());
}

TEST_CASE("project_zero_mean") {
  Mesh mesh = plain_square(8);
  auto map = fem::make_scalar_dofmap(mesh, fem::PhaseSel::both, false);

  SUBCASE("constant becomes zero") {
    Vec x = Vec::Constant(map.num_dofs, 2.5);
    fem::project_zero_mean(mesh, map, fem::PhaseSel::both, x);
    CHECK(x.cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("already mean-zero unchanged") {
    Vec x(map.num_dofs);
    for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
      double p[3];
      mesh.node_position(nid, p);
      x[map.dof_B[nid]] = std::sin(2 * M_PI * p[0]);  // mean-zero by symmetry
    }
    Vec before = x;
    fem::project_zero_mean(mesh, map, fem::PhaseSel::both, x);
    CHECK((x - before).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("coordinate field shifts by one half (midpoint quadrature oracle)") {
    Vec x(map.num_dofs);
    for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
      double p[3];
      mesh.node_position(nid, p);
      x[map.dof_B[nid]] = p[0];
    }
    fem::project_zero_mean(mesh, map, fem::PhaseSel::both, x);
    for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
      double p[3];
      mesh.node_position(nid, p);
      CHECK(x[map.dof_B[nid]] == doctest::Approx(p[0] - 0.5).epsilon(1e-13));
    }
    CHECK(std::abs(fem::region_mean(mesh, map, fem::PhaseSel::both, x)) < 1e-13);
  }
}

TEST_CASE("jump dofmap: interface nodes carry two dofs, others one") {
  auto cell = box_cell();
  auto map = fem::make_jump_dofmap(cell.mesh, false);
  std::vector<bool> on_iface(cell.mesh.num_nodes(), false);
  for (const auto& f : map.iface) {
    CHECK(map.dof_B[f.node] >= 0);
    CHECK(map.dof_D[f.node] >= 0);
    CHECK(map.dof_B[f.node] != map.dof_D[f.node]);
    on_iface[f.node] = true;
  }
  for (int nid = 0; nid < cell.mesh.num_nodes(); ++nid) {
    if (on_iface[nid]) continue;
    bool has_B = map.dof_B[nid] >= 0, has_D = map.dof_D[nid] >= 0;
    CHECK(has_B != has_D);  // exactly one side away from Gamma
  }
  // single connected component through the interface coupling
  CHECK(map.num_components == 1);
}

TEST_CASE("solve_spd: iteration cap failure carries a report") {
  auto cell = box_cell(16);
  auto map = fem::make_scalar_dofmap(cell.mesh, fem::PhaseSel::both, false);
  auto K = fem::assemble_stiffness(cell.mesh, map, fem::MatrixField::scalar(2, 1.0),
                                   fem::PhaseSel::both);
  for (int i = 0; i < map.num_dofs; ++i) K.mat.coeffRef(i, i) += 1e-8;
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  Vec b(map.num_dofs);
  for (int i = 0; i < map.num_dofs; ++i) b[i] = g(rng);
  fem::SolveOptions opts;
  opts.iter_cap_factor = 0.05;  // a handful of iterations at most
  opts.tol = 1e-14;
  try {
    fem::solve_spd(K, b, opts);
    FAIL("expected SolveFailure");
  } catch (const fem::SolveFailure& e) {
    CHECK(e.report.iterations > 0);
    CHECK(e.report.rel_residual > 1e-14);
    CHECK(e.report.method == "cg");
  }
}

TEST_CASE("region mean rejects an empty region") {
  auto cell = box_cell(8);
  auto map = fem::make_scalar_dofmap(cell.mesh, fem::PhaseSel::both, false);
  Mesh empty_mesh = cell.mesh;
  std::fill(empty_mesh.phase.begin(), empty_mesh.phase.end(), Phase::out);
  Vec x = Vec::Zero(map.num_dofs);
  CHECK_THROWS(fem::region_mean(empty_mesh, map, fem::PhaseSel::int_only, x));
}
