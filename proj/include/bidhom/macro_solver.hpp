#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "bidhom/cell_problems.hpp"
#include "bidhom/fem.hpp"
#include "bidhom/geometry.hpp"
#include "bidhom/ionics.hpp"
#include "bidhom/micro_solver.hpp"  // SpaceTimeFn / SpaceFn

namespace bidhom {

/// Memory kernel sampled at t_k = k dt_kernel with linear interpolation in
/// between; evaluation beyond the horizon truncates to zero (counted, the
/// caller warns once).
struct KernelTable {
  double dt_kernel = 0.0;
  std::vector<Mat> B;
  mutable long truncation_hits = 0;

  bool empty() const { return B.empty(); }
  double horizon() const { return B.empty() ? 0.0 : dt_kernel * (double(B.size()) - 1.0); }
  Mat at(double s) const;
};

/// Trapezoid evaluation of the convolution integral of B(t - tau) g(tau)
/// over [0, t] for a history of dim-vectors at uniform time nodes.
Vec convolve_pointwise(const KernelTable& kernel,
                       const std::vector<std::pair<double, Vec>>& history, double t);

struct MacroData {
  SpaceTimeFn f1 = zero_source();
  SpaceTimeFn f2 = zero_source();
  SpaceTimeFn Fsrc = zero_source();  // homogenized interface source (zero for s1 = 0)
  SpaceFn v0 = zero_field();
  SpaceFn w_in = [](const double*) { return 0.5; };
  SpaceFn s1bar = zero_field();  // interface-average initial jump (ell = -1)
  double T = 1.0;
};

struct MacroTrajectory {
  std::vector<double> times;
  std::vector<Vec> v, u, uB, uD, jump, w;
  long kernel_truncation_hits = 0;
};

/// Backward-Euler solver for the three homogenized limit systems: the
/// memory bidomain (ell = 1, kernel optional), the standard bidomain
/// (ell in (-1,1), A2_B + A2_D), and the tridomain (ell = -1, connected or
/// disconnected).
class MacroSolver {
public:
  enum class Regime { memory, mid, tridomain };

  MacroSolver(int dim, int resolution, const EffectiveTensors& tensors,
              const InterfaceParams& iface, const IonicModel& ionic, const MacroData& data,
              Regime regime, Topology topology = Topology::disconnected);

  MacroTrajectory run(double dt, const std::vector<double>& sample_times);

  const Mesh& mesh() const { return mesh_; }
  const fem::DofMap& map() const { return map_; }
  const KernelTable& kernel() const { return kernel_; }

private:
  Mesh mesh_;
  fem::DofMap map_;
  EffectiveTensors tensors_;
  InterfaceParams iface_;
  IonicModel ionic_;
  MacroData data_;
  Regime regime_;
  Topology topology_;
  KernelTable kernel_;

  Vec mass_;
  fem::SparseOperator K_A1_, K_U_, K_D_;         // A1 block, u block, A2_D block
  std::vector<fem::SparseOperator> K_basis_;     // symmetrized unit-coefficient blocks
  std::vector<std::pair<int, int>> basis_idx_;   // (p,q), p <= q

  Vec eval_dofs(const SpaceTimeFn& f, double t) const;
  Vec eval_dofs_space(const SpaceFn& f) const;
  Vec kernel_matvec(const Mat& B, const Vec& u) const;
};

}  // namespace bidhom
