#include "bidhom/macro_solver.hpp"

#include <cmath>
#include <stdexcept>

namespace bidhom {

using fem::SpMat;
using fem::Triplet;

Mat KernelTable::at(double s) const {
  if (B.empty()) throw std::logic_error("KernelTable: empty kernel");
  const int dim = static_cast<int>(B[0].rows());
  if (s <= 0.0) return B.front();
  double pos = s / dt_kernel;
  auto k = static_cast<long>(std::floor(pos));
  if (k >= static_cast<long>(B.size()) - 1) {
    if (s > horizon() * (1.0 + 1e-12)) {
      ++truncation_hits;
      return Mat::Zero(dim, dim);
    }
    return B.back();
  }
  double theta = pos - double(k);
  return (1.0 - theta) * B[k] + theta * B[k + 1];
}

Vec convolve_pointwise(const KernelTable& kernel,
                       const std::vector<std::pair<double, Vec>>& history, double t) {
  if (history.empty()) throw std::invalid_argument("convolve: empty history");
  if (history.front().first != 0.0 || history.back().first < t - 1e-12)
    throw std::invalid_argument("convolve: history must cover [0, t]");
  const int dim = static_cast<int>(history.front().second.size());
  Vec acc = Vec::Zero(dim);
  if (t <= 0.0 || kernel.empty()) return acc;
  std::size_t last = 0;
  while (last + 1 < history.size() && history[last + 1].first <= t + 1e-12) ++last;
  for (std::size_t m = 0; m <= last; ++m) {
    double w;
    if (last == 0)
      w = 0.0;
    else if (m == 0)
      w = (history[1].first - history[0].first) / 2.0;
    else if (m == last)
      w = (history[m].first - history[m - 1].first) / 2.0;
    else
      w = (history[m + 1].first - history[m - 1].first) / 2.0;
    acc += w * (kernel.at(t - history[m].first) * history[m].second);
  }
  return acc;
}

MacroSolver::MacroSolver(int dim, int resolution, const EffectiveTensors& tensors,
                         const InterfaceParams& iface, const IonicModel& ionic,
                         const MacroData& data, Regime regime, Topology topology)
    : tensors_(tensors), iface_(iface), ionic_(ionic), data_(data), regime_(regime),
      topology_(topology) {
  iface_.validate();
  ionic_.validate();
  if (tensors_.dim != dim) throw std::invalid_argument("macro: tensor dimension mismatch");
  if (tensors_.A1.size() == 0) throw std::invalid_argument("macro: missing A1 tensor");

  mesh_.dim = dim;
  mesh_.cells_per_side = {resolution, resolution, dim == 3 ? resolution : 1};
  mesh_.h = 1.0 / resolution;
  mesh_.periodic = false;
  mesh_.phase.assign(mesh_.num_cells(), Phase::out);
  map_ = fem::make_scalar_dofmap(mesh_, fem::PhaseSel::both, true);
  mass_ = fem::assemble_lumped_mass(mesh_, map_, fem::PhaseSel::both);

  K_A1_ = fem::assemble_stiffness(mesh_, map_, fem::MatrixField::constant(tensors_.A1),
                                  fem::PhaseSel::both);
  switch (regime_) {
    case Regime::memory: {
      if (tensors_.A2.size() == 0) throw std::invalid_argument("macro: missing A2 tensor");
      K_U_ = fem::assemble_stiffness(mesh_, map_, fem::MatrixField::constant(tensors_.A2),
                                     fem::PhaseSel::both);
      if (!tensors_.B.empty()) {
        kernel_.dt_kernel = tensors_.dt_kernel;
        kernel_.B = tensors_.B;
      }
      break;
    }
    case Regime::mid: {
      if (tensors_.A2_B.size() == 0)
        throw std::invalid_argument("macro: missing A2_B/A2_D tensors");
      Mat sum = tensors_.A2_B;
      if (tensors_.A2_D.size() != 0) sum += tensors_.A2_D;
      K_U_ = fem::assemble_stiffness(mesh_, map_, fem::MatrixField::constant(sum),
                                     fem::PhaseSel::both);
      break;
    }
    case Regime::tridomain: {
      if (tensors_.A2_B.size() == 0)
        throw std::invalid_argument("macro: missing A2_B/A2_D tensors");
      double d_norm = tensors_.A2_D.size() ? tensors_.A2_D.cwiseAbs().maxCoeff() : 0.0;
      if (topology_ == Topology::disconnected && d_norm > 1e-8)
        throw std::invalid_argument(
            "macro: disconnected tridomain run with a nonzero A2_D tensor");
      if (topology_ == Topology::connected && tensors_.A2_D.size() == 0)
        throw std::invalid_argument("macro: connected tridomain run without A2_D");
      K_U_ = fem::assemble_stiffness(mesh_, map_, fem::MatrixField::constant(tensors_.A2_B),
                                     fem::PhaseSel::both);
      if (topology_ == Topology::connected)
        K_D_ = fem::assemble_stiffness(mesh_, map_, fem::MatrixField::constant(tensors_.A2_D),
                                       fem::PhaseSel::both);
      break;
    }
  }

  if (!kernel_.empty()) {
    for (int p = 0; p < dim; ++p)
      for (int q = p; q < dim; ++q) {
        Mat S = Mat::Zero(dim, dim);
        S(p, q) = 1.0;
        S(q, p) = 1.0;
        K_basis_.push_back(fem::assemble_stiffness(mesh_, map_, fem::MatrixField::constant(S),
                                                   fem::PhaseSel::both));
        basis_idx_.emplace_back(p, q);
      }
  }
}

Vec MacroSolver::eval_dofs(const SpaceTimeFn& f, double t) const {
  Vec out = Vec::Zero(map_.num_dofs);
  double x[3];
  for (int nid = 0; nid < mesh_.num_nodes(); ++nid) {
    int d = map_.dof_B[nid];
    if (d < 0) continue;
    mesh_.node_position(nid, x);
    out[d] = f(x, t);
  }
  return out;
}

Vec MacroSolver::eval_dofs_space(const SpaceFn& f) const {
  Vec out = Vec::Zero(map_.num_dofs);
  double x[3];
  for (int nid = 0; nid < mesh_.num_nodes(); ++nid) {
    int d = map_.dof_B[nid];
    if (d < 0) continue;
    mesh_.node_position(nid, x);
    out[d] = f(x);
  }
  return out;
}

Vec MacroSolver::kernel_matvec(const Mat& B, const Vec& u) const {
  Vec acc = Vec::Zero(map_.num_dofs);
  for (std::size_t i = 0; i < K_basis_.size(); ++i) {
    auto [p, q] = basis_idx_[i];
    double coeff = B(p, q);
    if (coeff != 0.0) acc += coeff * (K_basis_[i].mat * u);
  }
  return acc;
}

MacroTrajectory MacroSolver::run(double dt, const std::vector<double>& sample_times) {
  if (dt > 1.0 / (2.0 * ionic_.C_I))
    throw std::invalid_argument("run_macro: dt exceeds the ionic stability bound dt <= 1/(2 C_I)");
  const long nsteps = std::lround(data_.T / dt);
  if (nsteps < 1 || std::abs(nsteps * dt - data_.T) > 1e-9 * std::max(data_.T, 1.0))
    throw std::invalid_argument("run_macro: horizon T must be an integer multiple of dt");
  std::vector<long> snap_at;
  for (double s : sample_times) {
    long idx = std::lround(s / dt);
    if (idx < 0 || idx > nsteps)
      throw std::invalid_argument("run_macro: sample time outside [0, T]");
    snap_at.push_back(idx);
  }

  const int N = map_.num_dofs;
  const bool tri = regime_ == Regime::tridomain;
  const bool tri_connected = tri && topology_ == Topology::connected;
  kernel_.truncation_hits = 0;

  // relaxation coefficients: alpha |Gamma| / |Y_out| in the connected
  // tridomain, plain alpha in the disconnected pointwise ODE
  const double gam_a =
      tri_connected ? iface_.alpha * tensors_.area_gamma / tensors_.vol_out : iface_.alpha;
  const double gam_b =
      tri_connected ? iface_.beta * tensors_.area_gamma / tensors_.vol_out : iface_.beta;

  Vec v = eval_dofs_space(data_.v0);
  Vec w = eval_dofs_space(data_.w_in);
  for (int i = 0; i < N; ++i)
    if (w[i] < 0.0 || w[i] > 1.0)
      throw std::invalid_argument("run_macro: w_in must lie in [0,1]");
  Vec jump;
  if (tri) jump = eval_dofs_space(data_.s1bar);

  // quasi-static initial u (the memory integral vanishes at t = 0)
  Vec u;
  {
    fem::SparseOperator K0;
    K0.mat = K_A1_.mat + K_U_.mat;
    Vec rhs = mass_.cwiseProduct(eval_dofs(data_.f1, 0.0) - eval_dofs(data_.f2, 0.0) +
                                 eval_dofs(data_.Fsrc, 0.0)) -
              K_A1_.mat * v;
    if (tri_connected) {
      K0.mat += K_D_.mat;
      rhs += K_D_.mat * jump;
    }
    fem::FactorizedOperator f0(K0);
    u = f0.solve(rhs);
  }

  std::unique_ptr<fem::FactorizedOperator> stepop;
  {
    std::vector<Triplet> trips;
    auto put = [&](const SpMat& m, int ro, int co) {
      for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
          trips.emplace_back(int(it.row()) + ro, int(it.col()) + co, it.value());
    };
    put(K_A1_.mat, 0, 0);
    for (int i = 0; i < N; ++i) trips.emplace_back(i, i, mass_[i] / dt);
    put(K_A1_.mat, 0, N);
    put(K_A1_.mat, N, 0);
    put(K_A1_.mat, N, N);
    put(K_U_.mat, N, N);
    if (!kernel_.empty()) {
      // current-time kernel node, implicit with trapezoid weight dt/2
      const Mat& B0 = kernel_.B.front();
      for (std::size_t i = 0; i < K_basis_.size(); ++i) {
        auto [p, q] = basis_idx_[i];
        if (B0(p, q) != 0.0) {
          SpMat imp = (dt / 2.0) * B0(p, q) * K_basis_[i].mat;
          put(imp, N, N);
        }
      }
    }
    if (tri_connected) {
      put(K_D_.mat, N, N);
      SpMat negKD = -K_D_.mat;
      put(negKD, N, 2 * N);
      put(negKD, 2 * N, N);
      put(K_D_.mat, 2 * N, 2 * N);
      for (int i = 0; i < N; ++i)
        trips.emplace_back(2 * N + i, 2 * N + i, (gam_a / dt + gam_b) * mass_[i]);
    }
    int total = tri_connected ? 3 * N : 2 * N;
    fem::SparseOperator A;
    A.mat.resize(total, total);
    A.mat.setFromTriplets(trips.begin(), trips.end());
    A.symmetric = true;
    stepop = std::make_unique<fem::FactorizedOperator>(A);
  }

  std::vector<Vec> u_history;
  u_history.reserve(nsteps + 1);
  u_history.push_back(u);

  MacroTrajectory traj;
  auto snap = [&](long n, double t) {
    for (long s : snap_at)
      if (s == n) {
        traj.times.push_back(t);
        traj.v.push_back(v);
        traj.w.push_back(w);
        if (tri) {
          traj.uB.push_back(u);
          traj.jump.push_back(jump);
          traj.uD.push_back(u - jump);
        } else {
          traj.u.push_back(u);
        }
        return;
      }
  };
  snap(0, 0.0);

  for (long n = 1; n <= nsteps; ++n) {
    const double t_next = n * dt;
    step_gating(ionic_, w, v, dt);
    Vec iion(N);
    for (int i = 0; i < N; ++i) iion[i] = ionic_.ionic_current(v[i], w[i]);

    Vec rv = mass_.cwiseProduct(v / dt - iion + eval_dofs(data_.f1, t_next));
    Vec ru = mass_.cwiseProduct(eval_dofs(data_.f1, t_next) - eval_dofs(data_.f2, t_next) +
                                eval_dofs(data_.Fsrc, t_next));

    if (!kernel_.empty()) {
      // explicit trapezoid nodes of the memory integral
      for (long m = 0; m < n; ++m) {
        double wgt = (m == 0) ? dt / 2.0 : dt;
        Mat Bm = kernel_.at(t_next - m * dt);
        if (Bm.cwiseAbs().maxCoeff() != 0.0) ru -= wgt * kernel_matvec(Bm, u_history[m]);
      }
    }

    if (!tri_connected) {
      if (tri) jump /= 1.0 + gam_b * dt / gam_a;  // pointwise relaxation ODE
      Vec rhs(2 * N);
      rhs << rv, ru;
      Vec sol = stepop->solve(rhs);
      v = sol.head(N);
      u = sol.tail(N);
    } else {
      Vec rj = (gam_a / dt) * mass_.cwiseProduct(jump);
      Vec rhs(3 * N);
      rhs << rv, ru, rj;
      Vec sol = stepop->solve(rhs);
      v = sol.head(N);
      u = sol.segment(N, N);
      jump = sol.tail(N);
    }
    u_history.push_back(u);
    snap(n, t_next);
  }
  traj.kernel_truncation_hits = kernel_.truncation_hits;
  return traj;
}

}  // namespace bidhom
