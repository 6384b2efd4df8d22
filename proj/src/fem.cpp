#include "bidhom/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace bidhom::fem {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

void finalize_components(DofMap& map, UnionFind& uf) {
  map.component.assign(map.num_dofs, -1);
  std::vector<int> root_to_comp(map.num_dofs, -1);
  int ncomp = 0;
  for (int d = 0; d < map.num_dofs; ++d) {
    int r = uf.find(d);
    if (root_to_comp[r] < 0) root_to_comp[r] = ncomp++;
    map.component[d] = root_to_comp[r];
  }
  map.num_components = ncomp;
  map.pins.assign(ncomp, -1);
  for (int d = 0; d < map.num_dofs; ++d)
    if (map.pins[map.component[d]] < 0) map.pins[map.component[d]] = d;
}

void adjacency_flags(const Mesh& mesh, std::vector<bool>& out_adj, std::vector<bool>& int_adj) {
  out_adj.assign(mesh.num_nodes(), false);
  int_adj.assign(mesh.num_nodes(), false);
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    mesh.cell_nodes(c, nodes);
    auto& flags = mesh.phase[c] == Phase::out ? out_adj : int_adj;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) flags[nodes[a]] = true;
  }
}

}  // namespace

DofMap make_scalar_dofmap(const Mesh& mesh, PhaseSel sel, bool dirichlet_boundary) {
  DofMap map;
  map.dof_B.assign(mesh.num_nodes(), -1);
  map.dof_D.assign(mesh.num_nodes(), -1);
  std::vector<bool> out_adj, int_adj;
  adjacency_flags(mesh, out_adj, int_adj);
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    bool present = (sel == PhaseSel::out_only && out_adj[nid]) ||
                   (sel == PhaseSel::int_only && int_adj[nid]) ||
                   (sel == PhaseSel::both && (out_adj[nid] || int_adj[nid]));
    if (!present) continue;
    if (dirichlet_boundary && mesh.node_on_boundary(nid)) continue;
    int id = map.num_dofs++;
    if (sel != PhaseSel::int_only) map.dof_B[nid] = id;
    if (sel != PhaseSel::out_only) map.dof_D[nid] = id;
  }

  UnionFind uf(map.num_dofs);
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!selects(sel, mesh.phase[c])) continue;
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    int first = -1;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int d = side[nodes[a]];
      if (d < 0) continue;
      if (first < 0)
        first = d;
      else
        uf.unite(first, d);
    }
  }
  finalize_components(map, uf);
  return map;
}

DofMap make_jump_dofmap(const Mesh& mesh, bool dirichlet_boundary) {
  DofMap map;
  map.dof_B.assign(mesh.num_nodes(), -1);
  map.dof_D.assign(mesh.num_nodes(), -1);
  std::vector<bool> out_adj, int_adj;
  adjacency_flags(mesh, out_adj, int_adj);
  std::vector<double> wnode = interface_node_weights(mesh);
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    if (dirichlet_boundary && mesh.node_on_boundary(nid)) continue;
    if (out_adj[nid]) map.dof_B[nid] = map.num_dofs++;
    if (int_adj[nid]) map.dof_D[nid] = map.num_dofs++;
    if (out_adj[nid] && int_adj[nid])
      map.iface.push_back({nid, map.dof_B[nid], map.dof_D[nid], wnode[nid]});
  }

  UnionFind uf(map.num_dofs);
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    int first = -1;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int d = side[nodes[a]];
      if (d < 0) continue;
      if (first < 0)
        first = d;
      else
        uf.unite(first, d);
    }
  }
  for (const InterfaceDof& f : map.iface) uf.unite(f.dof_B, f.dof_D);
  finalize_components(map, uf);
  return map;
}

MatrixField MatrixField::constant(const Mat& m) {
  MatrixField f;
  f.table_ = {m};
  return f;
}

MatrixField MatrixField::scalar(int dim, double c) {
  return constant(Mat::Identity(dim, dim) * c);
}

MatrixField MatrixField::per_cell(std::vector<Mat> table) {
  if (table.empty()) throw std::invalid_argument("MatrixField: empty per-cell table");
  MatrixField f;
  f.table_ = std::move(table);
  return f;
}

namespace {

void check_symmetric(const Mat& s) {
  double scale = s.cwiseAbs().maxCoeff();
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
    throw std::invalid_argument("coefficient matrix is not symmetric");
}

// 1D Q1 integrals on [0,h]
inline double k1(double h, int i, int j) { return (i == j ? 1.0 : -1.0) / h; }
inline double m1(double h, int i, int j) { return i == j ? h / 3.0 : h / 6.0; }
inline double g1(double /*h*/, int i, int /*j*/) { return i == 1 ? 0.5 : -0.5; }

}  // namespace

Mat element_stiffness(int dim, double h, const Mat& sigma) {
  check_symmetric(sigma);
  const int m = 1 << dim;
  Mat E = Mat::Zero(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      double sum = 0.0;
      for (int p = 0; p < dim; ++p)
        for (int q = 0; q < dim; ++q) {
          if (sigma(p, q) == 0.0) continue;
          double prod = 1.0;
          for (int d = 0; d < dim; ++d) {
            int ad = (a >> d) & 1, bd = (b >> d) & 1;
            if (d == p && d == q)
              prod *= k1(h, ad, bd);
            else if (d == p)
              prod *= g1(h, ad, bd);
            else if (d == q)
              prod *= g1(h, bd, ad);
            else
              prod *= m1(h, ad, bd);
          }
          sum += sigma(p, q) * prod;
        }
      E(a, b) = sum;
    }
  return E;
}

double grad_integral(int dim, double h, int local, int axis) {
  double sign = ((local >> axis) & 1) ? 1.0 : -1.0;
  return sign * std::pow(h / 2.0, dim - 1);
}

SparseOperator assemble_stiffness(const Mesh& mesh, const DofMap& map, const MatrixField& sigma,
                                  PhaseSel sel, int num_threads) {
  if (sigma.dim() != mesh.dim)
    throw std::invalid_argument("assemble_stiffness: coefficient dimension mismatch");
  const int nc = mesh.num_cells();
  const int m = mesh.corners_per_cell();

  Mat cached;
  if (sigma.is_constant()) cached = element_stiffness(mesh.dim, mesh.h, sigma.at(0));

  auto run_chunk = [&](int begin, int end, std::vector<Triplet>& trips) {
    int nodes[8];
    int dofs[8];
    for (int c = begin; c < end; ++c) {
      if (!selects(sel, mesh.phase[c])) continue;
      const Mat& E = sigma.is_constant()
                         ? cached
                         : element_stiffness(mesh.dim, mesh.h, sigma.at(c));
      mesh.cell_nodes(c, nodes);
      const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
      for (int a = 0; a < m; ++a) dofs[a] = side[nodes[a]];
      for (int a = 0; a < m; ++a) {
        if (dofs[a] < 0) continue;
        for (int b = 0; b < m; ++b) {
          if (dofs[b] < 0) continue;
          trips.emplace_back(dofs[a], dofs[b], E(a, b));
        }
      }
    }
  };

  std::vector<std::vector<Triplet>> chunks;
  if (num_threads <= 1) {
    chunks.resize(1);
    run_chunk(0, nc, chunks[0]);
  } else {
    chunks.resize(num_threads);
    std::vector<std::thread> threads;
    int per = (nc + num_threads - 1) / num_threads;
    for (int t = 0; t < num_threads; ++t)
      threads.emplace_back(run_chunk, std::min(t * per, nc), std::min((t + 1) * per, nc),
                           std::ref(chunks[t]));
    for (auto& th : threads) th.join();
  }
  // merge in chunk order so the floating-point reduction is deterministic
  std::vector<Triplet> trips;
  std::size_t total = 0;
  for (const auto& ch : chunks) total += ch.size();
  trips.reserve(total);
  for (const auto& ch : chunks) trips.insert(trips.end(), ch.begin(), ch.end());

  SparseOperator op;
  op.mat.resize(map.num_dofs, map.num_dofs);
  op.mat.setFromTriplets(trips.begin(), trips.end());
  op.symmetric = true;
  return op;
}

SparseOperator assemble_interface_mass(const Mesh& /*mesh*/, const DofMap& map) {
  std::vector<Triplet> trips;
  for (const InterfaceDof& f : map.iface) {
    if (f.dof_B >= 0) trips.emplace_back(f.dof_B, f.dof_B, f.weight);
    if (f.dof_D >= 0) trips.emplace_back(f.dof_D, f.dof_D, f.weight);
    if (f.dof_B >= 0 && f.dof_D >= 0) {
      trips.emplace_back(f.dof_B, f.dof_D, -f.weight);
      trips.emplace_back(f.dof_D, f.dof_B, -f.weight);
    }
  }
  SparseOperator op;
  op.mat.resize(map.num_dofs, map.num_dofs);
  op.mat.setFromTriplets(trips.begin(), trips.end());
  op.symmetric = true;
  return op;
}

Vec assemble_lumped_mass(const Mesh& mesh, const DofMap& map, PhaseSel sel) {
  Vec mass = Vec::Zero(map.num_dofs);
  const double share = std::pow(mesh.h, mesh.dim) / mesh.corners_per_cell();
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!selects(sel, mesh.phase[c])) continue;
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int d = side[nodes[a]];
      if (d >= 0) mass[d] += share;
    }
  }
  return mass;
}

Vec gradient_load(const Mesh& mesh, const DofMap& map, const MatrixField& sigma, PhaseSel sel,
                  int dir) {
  Vec b = Vec::Zero(map.num_dofs);
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!selects(sel, mesh.phase[c])) continue;
    const Mat& s = sigma.at(c);
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int d = side[nodes[a]];
      if (d < 0) continue;
      double v = 0.0;
      for (int p = 0; p < mesh.dim; ++p)
        v += s(p, dir) * grad_integral(mesh.dim, mesh.h, a, p);
      b[d] += v;
    }
  }
  return b;
}

Vec flux_integral(const Mesh& mesh, const DofMap& map, const MatrixField& sigma, PhaseSel sel,
                  const Vec& x) {
  Vec total = Vec::Zero(mesh.dim);
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!selects(sel, mesh.phase[c])) continue;
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int d = side[nodes[a]];
      double val = d >= 0 ? x[d] : 0.0;
      if (val == 0.0) continue;
      for (int p = 0; p < mesh.dim; ++p) g[p] += val * grad_integral(mesh.dim, mesh.h, a, p);
    }
    total += sigma.at(c) * g.head(mesh.dim);
  }
  return total;
}

void apply_pins(SparseOperator& op, const std::vector<int>& pins) {
  if (pins.empty()) return;
  std::vector<bool> pinned(op.rows(), false);
  for (int p : pins) pinned[p] = true;
  std::vector<Triplet> trips;
  trips.reserve(op.mat.nonZeros() + pins.size());
  for (int k = 0; k < op.mat.outerSize(); ++k)
    for (SpMat::InnerIterator it(op.mat, k); it; ++it) {
      if (pinned[it.row()] || pinned[it.col()]) continue;
      trips.emplace_back(it.row(), it.col(), it.value());
    }
  for (int p : pins) trips.emplace_back(p, p, 1.0);
  SpMat pruned(op.mat.rows(), op.mat.cols());
  pruned.setFromTriplets(trips.begin(), trips.end());
  op.mat.swap(pruned);
}

std::pair<Vec, LinearSolveReport> solve_spd(const SparseOperator& op, const Vec& b,
                                            const SolveOptions& opts) {
  const int n = op.rows();
  if (b.size() != n) throw std::invalid_argument("solve_spd: size mismatch");
  const double bnorm = b.norm();

  if (opts.check_neumann_compat && opts.map) {
    Vec comp_sum = Vec::Zero(opts.map->num_components);
    for (int d = 0; d < n; ++d) comp_sum[opts.map->component[d]] += b[d];
    for (int c = 0; c < opts.map->num_components; ++c)
      if (std::abs(comp_sum[c]) > 1e-10 * std::max(bnorm, 1e-300))
        throw std::runtime_error("solve_spd: incompatible Neumann data (component sum " +
                                 std::to_string(comp_sum[c]) + ")");
  }

  LinearSolveReport rep;
  if (opts.method == SolveOptions::direct) {
    if (n > 4000)
      throw std::invalid_argument("solve_spd: dense direct path limited to 4000 DOFs");
    Mat A = Mat(op.mat);
    Eigen::LDLT<Mat> ldlt(A);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("solve_spd: dense factorization failed");
    Vec x = ldlt.solve(b);
    rep.method = "direct";
    rep.iterations = 0;
    rep.rel_residual = bnorm > 0 ? (b - op.mat * x).norm() / bnorm : 0.0;
    return {std::move(x), rep};
  }

  // Jacobi-preconditioned CG
  Vec dinv(n);
  for (int i = 0; i < n; ++i) {
    double d = op.mat.coeff(i, i);
    dinv[i] = d > 0 ? 1.0 / d : 1.0;
  }
  Vec x = Vec::Zero(n);
  if (bnorm == 0.0) {
    rep.method = "cg";
    return {std::move(x), rep};
  }
  Vec r = b;
  Vec z = dinv.asDiagonal() * r;
  Vec p = z;
  double rz = r.dot(z);
  const int cap = static_cast<int>(opts.iter_cap_factor * std::sqrt(double(n))) + 10;
  int it = 0;
  double rel = r.norm() / bnorm;
  while (rel > opts.tol && it < cap) {
    Vec Ap = op.mat * p;
    double alpha = rz / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    rel = r.norm() / bnorm;
    if (rel <= opts.tol) {
      ++it;
      break;
    }
    Vec z2 = dinv.asDiagonal() * r;
    double rz2 = r.dot(z2);
    p = z2 + (rz2 / rz) * p;
    z.swap(z2);
    rz = rz2;
    ++it;
  }
  rep.method = "cg";
  rep.iterations = it;
  rep.rel_residual = rel;
  if (rel > opts.tol) throw SolveFailure(rep);
  return {std::move(x), rep};
}

FactorizedOperator::FactorizedOperator(const SparseOperator& op) {
  ldlt_.compute(op.mat);
  if (ldlt_.info() != Eigen::Success)
    throw std::runtime_error("FactorizedOperator: sparse factorization failed");
}

Vec FactorizedOperator::solve(const Vec& b) const { return ldlt_.solve(b); }

double region_measure(const Mesh& mesh, PhaseSel sel) {
  long count = 0;
  for (int c = 0; c < mesh.num_cells(); ++c)
    if (selects(sel, mesh.phase[c])) ++count;
  return count * std::pow(mesh.h, mesh.dim);
}

double region_mean(const Mesh& mesh, const DofMap& map, PhaseSel sel, const Vec& x) {
  double integral = 0.0, measure = 0.0;
  const double cellvol = std::pow(mesh.h, mesh.dim);
  const int m = mesh.corners_per_cell();
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!selects(sel, mesh.phase[c])) continue;
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    double avg = 0.0;
    for (int a = 0; a < m; ++a) {
      int d = side[nodes[a]];
      if (d >= 0) avg += x[d];
    }
    integral += cellvol * avg / m;
    measure += cellvol;
  }
  if (measure == 0.0) throw std::invalid_argument("region_mean: empty region");
  return integral / measure;
}

void project_zero_mean(const Mesh& mesh, const DofMap& map, PhaseSel sel, Vec& x) {
  std::vector<double> integral(map.num_components, 0.0), measure(map.num_components, 0.0);
  const double cellvol = std::pow(mesh.h, mesh.dim);
  const int m = mesh.corners_per_cell();
  int nodes[8];
  bool any = false;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!selects(sel, mesh.phase[c])) continue;
    mesh.cell_nodes(c, nodes);
    const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
    int comp = -1;
    double avg = 0.0;
    for (int a = 0; a < m; ++a) {
      int d = side[nodes[a]];
      if (d < 0) continue;
      if (comp < 0) comp = map.component[d];
      avg += x[d];
    }
    if (comp < 0) continue;
    any = true;
    integral[comp] += cellvol * avg / m;
    measure[comp] += cellvol;
  }
  if (!any) throw std::invalid_argument("project_zero_mean: empty region");
  for (int d = 0; d < map.num_dofs; ++d) {
    int c = map.component[d];
    if (measure[c] > 0) x[d] -= integral[c] / measure[c];
  }
}

}  // namespace bidhom::fem
