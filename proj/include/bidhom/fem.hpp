#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <stdexcept>
#include <string>
#include <vector>

#include "bidhom/geometry.hpp"

namespace bidhom::fem {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class PhaseSel { out_only, int_only, both };

inline bool selects(PhaseSel sel, Phase p) {
  return sel == PhaseSel::both || (sel == PhaseSel::out_only && p == Phase::out) ||
         (sel == PhaseSel::int_only && p == Phase::inc);
}

struct SparseOperator {
  SpMat mat;
  bool symmetric = false;
  int rows() const { return static_cast<int>(mat.rows()); }
};

struct InterfaceDof {
  int node = -1;
  int dof_B = -1;
  int dof_D = -1;
  double weight = 0.0;  // lumped interface area attached to the node
};

/// Node-to-DOF map for one scalar field. Out-phase elements address their
/// corner values through dof_B, inclusion elements through dof_D; for fields
/// continuous across Gamma the two coincide. Interface nodes of jump fields
/// carry two distinct indices (B-side and D-side traces).
struct DofMap {
  int num_dofs = 0;
  std::vector<int> dof_B;
  std::vector<int> dof_D;
  std::vector<InterfaceDof> iface;
  std::vector<int> component;  // per dof: connected-component id
  int num_components = 0;
  std::vector<int> pins;  // one dof per component, for pure-Neumann systems

  int dof_of(Phase p, int node) const { return p == Phase::out ? dof_B[node] : dof_D[node]; }
};

/// Continuous scalar field on the cells selected by `sel`.
DofMap make_scalar_dofmap(const Mesh& mesh, PhaseSel sel, bool dirichlet_boundary);

/// Two-sided field: one DOF per phase trace, doubled on interface nodes.
DofMap make_jump_dofmap(const Mesh& mesh, bool dirichlet_boundary);

/// Per-cell symmetric dim x dim coefficient; either one constant matrix or a
/// table indexed by cell id.
class MatrixField {
public:
  MatrixField() = default;
  static MatrixField constant(const Mat& m);
  static MatrixField scalar(int dim, double c);
  static MatrixField per_cell(std::vector<Mat> table);

  const Mat& at(int cell) const { return table_.size() == 1 ? table_[0] : table_[cell]; }
  bool is_constant() const { return table_.size() == 1; }
  int dim() const { return table_.empty() ? 0 : static_cast<int>(table_[0].rows()); }
  std::size_t table_size() const { return table_.size(); }

private:
  std::vector<Mat> table_;
};

/// Q1 element matrices for a cube of edge h with constant coefficient sigma.
Mat element_stiffness(int dim, double h, const Mat& sigma);

/// Exact integrals of the element basis gradients, (integral over the element
/// of grad N_a)_p = grad_int(a, p); shared by loads and flux integrals.
double grad_integral(int dim, double h, int local, int axis);

SparseOperator assemble_stiffness(const Mesh& mesh, const DofMap& map, const MatrixField& sigma,
                                  PhaseSel sel, int num_threads = 1);

/// Lumped jump mass on Gamma: (M x) . y = integral over Gamma of [x][y].
SparseOperator assemble_interface_mass(const Mesh& mesh, const DofMap& map);

/// Lumped (row-sum) mass over the selected cells, as a diagonal vector.
Vec assemble_lumped_mass(const Mesh& mesh, const DofMap& map, PhaseSel sel);

/// b_i = integral over the selected cells of sigma e_dir . grad phi_i.
Vec gradient_load(const Mesh& mesh, const DofMap& map, const MatrixField& sigma, PhaseSel sel,
                  int dir);

/// Exact integral over the selected cells of sigma grad x, as a dim-vector.
Vec flux_integral(const Mesh& mesh, const DofMap& map, const MatrixField& sigma, PhaseSel sel,
                  const Vec& x);

/// Replaces pinned rows/columns by identity (keeps SPD structure).
void apply_pins(SparseOperator& op, const std::vector<int>& pins);

struct LinearSolveReport {
  int iterations = 0;
  double rel_residual = 0.0;
  std::string method;
};

struct SolveFailure : std::runtime_error {
  LinearSolveReport report;
  explicit SolveFailure(LinearSolveReport r)
      : std::runtime_error("solve_spd: CG did not converge (relative residual " +
                           std::to_string(r.rel_residual) + " after " +
                           std::to_string(r.iterations) + " iterations)"),
        report(std::move(r)) {}
};

struct SolveOptions {
  double tol = 1e-10;
  enum Method { cg, direct } method = cg;
  double iter_cap_factor = 50.0;  // cap = factor * sqrt(num_dofs)
  bool check_neumann_compat = false;
  const DofMap* map = nullptr;  // component info for the compatibility check
};

/// SPD solve; CG with Jacobi preconditioning by default, dense direct
/// factorization for systems up to 4000 DOFs (used by the test oracles).
std::pair<Vec, LinearSolveReport> solve_spd(const SparseOperator& op, const Vec& b,
                                            const SolveOptions& opts = {});

/// Cached sparse Cholesky for time-stepping loops with a fixed operator.
class FactorizedOperator {
public:
  explicit FactorizedOperator(const SparseOperator& op);
  Vec solve(const Vec& b) const;

private:
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

/// Mean of the Q1 interpolant over the selected cells, element-midpoint
/// quadrature (exact for affine fields).
double region_mean(const Mesh& mesh, const DofMap& map, PhaseSel sel, const Vec& x);
double region_measure(const Mesh& mesh, PhaseSel sel);

/// Subtracts the per-component region mean; the result has region mean below
/// 1e-13 and differs from the input by a constant on each component.
void project_zero_mean(const Mesh& mesh, const DofMap& map, PhaseSel sel, Vec& x);

}  // namespace bidhom::fem
