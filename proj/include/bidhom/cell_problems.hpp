#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bidhom/fem.hpp"
#include "bidhom/geometry.hpp"

namespace bidhom {

using fem::Mat;
using fem::Vec;

/// Conductivities of the three media as Y-periodic per-cell matrix fields,
/// with declared uniform ellipticity bounds c0, c0_tilde.
struct Coefficients {
  fem::MatrixField sigma_int, sigma_out, sigma_dis;
  double c0 = 0.0;
  double c0_tilde = 0.0;

  /// Samples random vectors per cell and verifies the ellipticity bounds and
  /// symmetry; throws on violation.
  void validate(const Mesh& mesh) const;
};

/// Capacitive/resistive interface parameters and the scaling exponent.
struct InterfaceParams {
  double alpha = 1.0;
  double beta = 1.0;
  double ell = 1.0;

  enum class Regime { minus_one, mid, one, above_one };
  Regime regime() const;  // throws for ell < -1
  void validate() const;
};

/// All unit-cell correctors; time series are sampled at t_k = k dt_kernel.
struct CellCorrectors {
  std::vector<Vec> zeta;    // per direction, on the out-phase map
  std::vector<Vec> chi0;    // on the whole-cell continuous map
  std::vector<Vec> chi0_B;  // out-phase Neumann corrector
  std::vector<Vec> chi0_D;  // inclusion-phase Neumann corrector (may be empty)
  std::vector<std::vector<Vec>> chi1;  // [direction][time], jump map
  std::vector<Vec> T_s1;               // [time], jump map (optional)
  double dt_kernel = 0.0;
  int K = 0;
};

struct EffectiveTensors {
  int dim = 2;
  Mat A1, A2, A2_B, A2_D;
  std::vector<Mat> B;           // memory kernel at t_k, k = 0..K
  std::vector<Vec> F_cellflux;  // integral over Y of sigma grad T(s1) at t_k
  double dt_kernel = 0.0;
  int K = 0;
  double vol_out = 1.0, vol_int = 0.0, area_gamma = 0.0;
  std::uint64_t key_hash = 0;
  double kernel_tail_ratio = 0.0;  // |B(t_K)| / |B(0)| (truncation metadata)
};

/// Solves the unit-cell corrector problems and produces effective tensors.
/// The directional problems of each family are independent and can run on
/// separate threads.
class CellSolver {
public:
  CellSolver(const CellGeometry& cell, const Coefficients& coeffs, double tol = 1e-12,
             int threads = 1);

  std::vector<Vec> solve_zeta() const;
  std::vector<Vec> solve_chi0() const;
  std::pair<std::vector<Vec>, std::vector<Vec>> solve_chi0_neumann() const;

  /// Memory corrector: backward Euler with the jump carried implicitly; the
  /// initial jump comes from the discrete weak-form flux of chi0.
  std::vector<std::vector<Vec>> solve_chi1(const InterfaceParams& iface, double dt_kernel, int K,
                                           const std::vector<Vec>& chi0) const;

  /// Same evolution with prescribed initial datum alpha [T](0) = s1.
  std::vector<Vec> solve_T_s1(const InterfaceParams& iface, const std::vector<double>& s1_facet,
                              double dt_kernel, int K) const;
  std::vector<Vec> solve_T_s1_nodal(const InterfaceParams& iface, const Vec& s1_nodal,
                                    double dt_kernel, int K) const;

  /// Initial jump of chi1^j as nodal values on the interface (exposed for
  /// tests and for building T(s1) data).
  Vec chi1_initial_jump(int dir, const std::vector<Vec>& chi0) const;

  /// Nodal interface values from per-facet data (lumped averaging).
  Vec facet_to_nodal(const std::vector<double>& s_facet) const;

  EffectiveTensors compute_effective(InterfaceParams::Regime regime,
                                     const CellCorrectors& cor) const;

  const fem::DofMap& out_map() const { return map_out_; }
  const fem::DofMap& all_map() const { return map_all_; }
  const fem::DofMap& int_map() const { return map_int_; }
  const fem::DofMap& jump_map() const { return map_jump_; }
  const CellGeometry& cell() const { return cell_; }

  /// integral over Y of sigma_both grad x for a jump-map field.
  Vec flux_both_jump(const Vec& x) const;
  /// Lumped L2 norm squared of the jump of a jump-map field.
  double jump_norm_sq(const Vec& x) const;

private:
  CellGeometry cell_;
  Coefficients co_;
  double tol_;
  int threads_;
  fem::DofMap map_out_, map_all_, map_int_, map_jump_;

  std::vector<Vec> solve_neumann_family(const fem::DofMap& map, const fem::MatrixField& sigma,
                                        fem::PhaseSel sel) const;
  Vec harmonic_from_jump(const Vec& jump_nodal) const;  // K-harmonic lift, mean-zero
  std::vector<Vec> evolve_jump_series(const InterfaceParams& iface, double dt_kernel, int K,
                                      const Vec& initial_jump) const;
};

/// Drives the full corrector computation for a regime (used by the harness).
CellCorrectors solve_all_correctors(const CellSolver& solver, const InterfaceParams& iface,
                                    double dt_kernel, int K,
                                    const std::vector<double>* s1_facet = nullptr);

}  // namespace bidhom
