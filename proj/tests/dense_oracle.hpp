// Test-only independent assembly: 2-point Gauss quadrature of the Q1 forms,
// dense storage, Lagrange-multiplier mean constraints. Shares only mesh
// indexing and dof numbering with the library.
#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "bidhom/fem.hpp"
#include "bidhom/geometry.hpp"

namespace oracle {

using bidhom::Mesh;
using bidhom::Phase;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline void basis_gradients(const Mesh& mesh, const double xi[3], Mat& grads) {
  const int dim = mesh.dim;
  const int m = 1 << dim;
  grads.resize(m, dim);
  for (int a = 0; a < m; ++a)
    for (int d = 0; d < dim; ++d) {
      double g = ((a >> d) & 1) ? 1.0 / mesh.h : -1.0 / mesh.h;
      for (int dd = 0; dd < dim; ++dd) {
        if (dd == d) continue;
        g *= ((a >> dd) & 1) ? xi[dd] : 1.0 - xi[dd];
      }
      grads(a, d) = g;
    }
}

// dense stiffness over the selected phase; rows/cols indexed by the given
// side arrays of two dof maps (use the same map twice for a square operator)
inline Mat assemble_dense(const Mesh& mesh, const std::vector<int>& row_side,
                          const std::vector<int>& col_side, int nrows, int ncols,
                          const bidhom::fem::MatrixField& sigma, bidhom::fem::PhaseSel sel) {
  Mat K = Mat::Zero(nrows, ncols);
  const int dim = mesh.dim;
  const int m = 1 << dim;
  const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  int nodes[8];
  Mat grads;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!bidhom::fem::selects(sel, mesh.phase[c])) continue;
    mesh.cell_nodes(c, nodes);
    const Mat& s = sigma.at(c);
    const int nq = 1 << dim;
    for (int q = 0; q < nq; ++q) {
      double xi[3] = {gp[q & 1], gp[(q >> 1) & 1], gp[(q >> 2) & 1]};
      double wq = std::pow(mesh.h, dim) / nq;
      basis_gradients(mesh, xi, grads);
      for (int a = 0; a < m; ++a) {
        int ra = row_side[nodes[a]];
        if (ra < 0) continue;
        for (int b = 0; b < m; ++b) {
          int cb = col_side[nodes[b]];
          if (cb < 0) continue;
          K(ra, cb) += wq * grads.row(a) * s * grads.row(b).transpose();
        }
      }
    }
  }
  return K;
}

struct DenseCellOracle {
  const Mesh& mesh;
  const bidhom::fem::DofMap& map;

  Mat assemble(const bidhom::fem::MatrixField& sigma, bidhom::fem::PhaseSel sel) const {
    const bool out_rows = sel != bidhom::fem::PhaseSel::int_only;
    // square operator: dispatch sides by element phase
    Mat K = Mat::Zero(map.num_dofs, map.num_dofs);
    const int dim = mesh.dim;
    const int m = 1 << dim;
    const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    int nodes[8];
    Mat grads;
    (void)out_rows;
    for (int c = 0; c < mesh.num_cells(); ++c) {
      if (!bidhom::fem::selects(sel, mesh.phase[c])) continue;
      mesh.cell_nodes(c, nodes);
      const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
      const Mat& s = sigma.at(c);
      const int nq = 1 << dim;
      for (int q = 0; q < nq; ++q) {
        double xi[3] = {gp[q & 1], gp[(q >> 1) & 1], gp[(q >> 2) & 1]};
        double wq = std::pow(mesh.h, dim) / nq;
        basis_gradients(mesh, xi, grads);
        for (int a = 0; a < m; ++a) {
          int ra = side[nodes[a]];
          if (ra < 0) continue;
          for (int b = 0; b < m; ++b) {
            int cb = side[nodes[b]];
            if (cb < 0) continue;
            K(ra, cb) += wq * grads.row(a) * s * grads.row(b).transpose();
          }
        }
      }
    }
    return K;
  }

  Vec load(const bidhom::fem::MatrixField& sigma, bidhom::fem::PhaseSel sel, int dir) const {
    Vec b = Vec::Zero(map.num_dofs);
    const int dim = mesh.dim;
    const int m = 1 << dim;
    const double gp[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
    int nodes[8];
    Mat grads;
    for (int c = 0; c < mesh.num_cells(); ++c) {
      if (!bidhom::fem::selects(sel, mesh.phase[c])) continue;
      mesh.cell_nodes(c, nodes);
      const auto& side = mesh.phase[c] == Phase::out ? map.dof_B : map.dof_D;
      const Mat& s = sigma.at(c);
      const int nq = 1 << dim;
      for (int q = 0; q < nq; ++q) {
        double xi[3] = {gp[q & 1], gp[(q >> 1) & 1], gp[(q >> 2) & 1]};
        double wq = std::pow(mesh.h, dim) / nq;
        basis_gradients(mesh, xi, grads);
        for (int a = 0; a < m; ++a) {
          int da = side[nodes[a]];
          if (da < 0) continue;
          for (int d = 0; d < dim; ++d) b[da] += wq * s(d, dir) * grads(a, d);
        }
      }
    }
    return b;
  }

  Vec solve_mean_constrained(const Mat& K, const Vec& b) const {
    const int n = static_cast<int>(K.rows());
    Mat A = Mat::Zero(n + 1, n + 1);
    A.topLeftCorner(n, n) = K;
    A.topRightCorner(n, 1).setOnes();
    A.bottomLeftCorner(1, n).setOnes();
    Vec rhs = Vec::Zero(n + 1);
    rhs.head(n) = b;
    Vec ext = A.fullPivLu().solve(rhs);
    return ext.head(n);
  }
};

// max deviation between two fields that are each defined up to a constant
inline double diff_up_to_constant(const Vec& a, const Vec& b) {
  Vec d = a - b;
  return (d.array() - d.mean()).abs().maxCoeff();
}

}  // namespace oracle
