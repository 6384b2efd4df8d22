#include "bidhom/micro_solver.hpp"

#include <cmath>
#include <stdexcept>

namespace bidhom {

using fem::Mat;
using fem::SpMat;
using fem::Triplet;
using fem::Vec;

namespace {

// nodal values of f(x, t) written to every dof of the map (both traces of an
// interface node see the same nodal position)
Vec eval_to_dofs(const Mesh& mesh, const fem::DofMap& map, const SpaceTimeFn& f, double t) {
  Vec out = Vec::Zero(map.num_dofs);
  double x[3];
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    int dB = map.dof_B[nid], dD = map.dof_D[nid];
    if (dB < 0 && dD < 0) continue;
    mesh.node_position(nid, x);
    double val = f(x, t);
    if (dB >= 0) out[dB] = val;
    if (dD >= 0 && dD != dB) out[dD] = val;
  }
  return out;
}

void append_block(std::vector<Triplet>& trips, const SpMat& m, int row_off, int col_off) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      trips.emplace_back(int(it.row()) + row_off, int(it.col()) + col_off, it.value());
}

// rectangular stiffness coupling two different dof maps over one phase
SpMat assemble_cross(const Mesh& mesh, const fem::DofMap& rows, const fem::DofMap& cols,
                     const fem::MatrixField& sigma, fem::PhaseSel sel) {
  std::vector<Triplet> trips;
  int nodes[8];
  Mat cached;
  if (sigma.is_constant()) cached = fem::element_stiffness(mesh.dim, mesh.h, sigma.at(0));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    if (!fem::selects(sel, mesh.phase[c])) continue;
    const Mat& E =
        sigma.is_constant() ? cached : fem::element_stiffness(mesh.dim, mesh.h, sigma.at(c));
    mesh.cell_nodes(c, nodes);
    const auto& rside = mesh.phase[c] == Phase::out ? rows.dof_B : rows.dof_D;
    const auto& cside = mesh.phase[c] == Phase::out ? cols.dof_B : cols.dof_D;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int ra = rside[nodes[a]];
      if (ra < 0) continue;
      for (int b = 0; b < mesh.corners_per_cell(); ++b) {
        int cb = cside[nodes[b]];
        if (cb < 0) continue;
        trips.emplace_back(ra, cb, E(a, b));
      }
    }
  }
  SpMat m(rows.num_dofs, cols.num_dofs);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace

fem::MatrixField tile_field(const DomainGeometry& dom, const fem::MatrixField& unit_field) {
  if (unit_field.is_constant()) return unit_field;
  std::vector<Mat> table(dom.mesh.num_cells());
  for (int c = 0; c < dom.mesh.num_cells(); ++c) table[c] = unit_field.at(unit_cell_of(dom, c));
  return fem::MatrixField::per_cell(std::move(table));
}

MicroSolver::MicroSolver(const DomainGeometry& dom, const Coefficients& coeffs,
                         const InterfaceParams& iface, const IonicModel& ionic,
                         const ProblemData& data)
    : dom_(dom), co_(coeffs), iface_(iface), ionic_(ionic), data_(data) {
  iface_.validate();
  ionic_.validate();
  co_.validate(dom_.cell.mesh);
  eps_pow_ = std::pow(dom_.eps, -iface_.ell);
  build_operators();
}

void MicroSolver::build_operators() {
  const Mesh& mesh = dom_.mesh;
  map_v_ = fem::make_scalar_dofmap(mesh, fem::PhaseSel::out_only, true);
  map_u_ = fem::make_jump_dofmap(mesh, true);
  map_uc_ = fem::make_scalar_dofmap(mesh, fem::PhaseSel::both, true);

  sig_int_ = tile_field(dom_, co_.sigma_int);
  sig_out_ = tile_field(dom_, co_.sigma_out);
  sig_dis_ = tile_field(dom_, co_.sigma_dis);
  if (sig_int_.is_constant() && sig_out_.is_constant()) {
    sig_sum_ = fem::MatrixField::constant(sig_int_.at(0) + sig_out_.at(0));
  } else {
    std::vector<Mat> table(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) table[c] = sig_int_.at(c) + sig_out_.at(c);
    sig_sum_ = fem::MatrixField::per_cell(std::move(table));
  }

  mass_v_ = fem::assemble_lumped_mass(mesh, map_v_, fem::PhaseSel::out_only);
  mass_u_out_ = fem::assemble_lumped_mass(mesh, map_u_, fem::PhaseSel::out_only);
  Mg_ = fem::assemble_interface_mass(mesh, map_u_);

  Kvv_ = fem::assemble_stiffness(mesh, map_v_, sig_int_, fem::PhaseSel::out_only);
  Kvu_.mat = assemble_cross(mesh, map_v_, map_u_, sig_int_, fem::PhaseSel::out_only);
  Kuu_ = fem::assemble_stiffness(mesh, map_u_, sig_sum_, fem::PhaseSel::out_only);
  {
    fem::SparseOperator Kd =
        fem::assemble_stiffness(mesh, map_u_, sig_dis_, fem::PhaseSel::int_only);
    Kuu_.mat += Kd.mat;
  }
}

void MicroSolver::ensure_jumpfix() {
  if (jumpfix_) return;
  fem::SparseOperator Kc =
      fem::assemble_stiffness(dom_.mesh, map_uc_, sig_sum_, fem::PhaseSel::out_only);
  fem::SparseOperator Kcd =
      fem::assemble_stiffness(dom_.mesh, map_uc_, sig_dis_, fem::PhaseSel::int_only);
  Kc.mat += Kcd.mat;
  jumpfix_ = std::make_unique<fem::FactorizedOperator>(Kc);
}

void MicroSolver::factor_for_dt(double dt) {
  if (dt == factored_dt_) return;
  const int nV = map_v_.num_dofs, nU = map_u_.num_dofs, nC = map_uc_.num_dofs;
  std::vector<Triplet> trips;
  append_block(trips, Kvv_.mat, 0, 0);
  for (int i = 0; i < nV; ++i) trips.emplace_back(i, i, mass_v_[i] / dt);

  if (!data_.decouple_interface) {
    append_block(trips, Kvu_.mat, 0, nV);
    append_block(trips, SpMat(Kvu_.mat.transpose()), nV, 0);
    append_block(trips, Kuu_.mat, nV, nV);
    SpMat ifc = eps_pow_ * (iface_.alpha / dt + iface_.beta) * Mg_.mat;
    append_block(trips, ifc, nV, nV);
    fem::SparseOperator A;
    A.mat.resize(nV + nU, nV + nU);
    A.mat.setFromTriplets(trips.begin(), trips.end());
    A.symmetric = true;
    coupled_ = std::make_unique<fem::FactorizedOperator>(A);
  } else {
    // prescribed-jump stepping: unknowns (v, continuous part of u)
    SpMat cross = assemble_cross(dom_.mesh, map_v_, map_uc_, sig_int_, fem::PhaseSel::out_only);
    append_block(trips, cross, 0, nV);
    append_block(trips, SpMat(cross.transpose()), nV, 0);
    fem::SparseOperator Kc =
        fem::assemble_stiffness(dom_.mesh, map_uc_, sig_sum_, fem::PhaseSel::out_only);
    fem::SparseOperator Kcd =
        fem::assemble_stiffness(dom_.mesh, map_uc_, sig_dis_, fem::PhaseSel::int_only);
    Kc.mat += Kcd.mat;
    append_block(trips, Kc.mat, nV, nV);
    fem::SparseOperator A;
    A.mat.resize(nV + nC, nV + nC);
    A.mat.setFromTriplets(trips.begin(), trips.end());
    A.symmetric = true;
    coupled_ = std::make_unique<fem::FactorizedOperator>(A);
  }
  factored_dt_ = dt;
}

fem::Vec MicroSolver::solve_with_prescribed_jump(const Vec& jump_nodal, const Vec& rhs_u) {
  // u = lift + continuous z; jump-free tests see rhs_u - K lift
  const Mesh& mesh = dom_.mesh;
  ensure_jumpfix();
  Vec lift = Vec::Zero(map_u_.num_dofs);
  for (const auto& f : map_u_.iface) lift[f.dof_B] = jump_nodal[f.node];
  Vec r = rhs_u - Kuu_.mat * lift;
  Vec rc = Vec::Zero(map_uc_.num_dofs);
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    int dc = map_uc_.dof_B[nid];
    if (dc < 0) continue;
    if (map_u_.dof_B[nid] >= 0) rc[dc] += r[map_u_.dof_B[nid]];
    if (map_u_.dof_D[nid] >= 0) rc[dc] += r[map_u_.dof_D[nid]];
  }
  Vec z = jumpfix_->solve(rc);
  Vec u = lift;
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    int dc = map_uc_.dof_B[nid];
    if (dc < 0) continue;
    if (map_u_.dof_B[nid] >= 0) u[map_u_.dof_B[nid]] += z[dc];
    if (map_u_.dof_D[nid] >= 0) u[map_u_.dof_D[nid]] += z[dc];
  }
  return u;
}

void MicroSolver::init() {
  const Mesh& mesh = dom_.mesh;
  t_ = 0.0;
  v_ = Vec::Zero(map_v_.num_dofs);
  w_ = Vec::Zero(map_v_.num_dofs);
  double x[3];
  for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
    int d = map_v_.dof_B[nid];
    if (d < 0) continue;
    mesh.node_position(nid, x);
    v_[d] = data_.v0(x);
    w_[d] = data_.w_in(x);
    if (w_[d] < 0.0 || w_[d] > 1.0)
      throw std::invalid_argument("init_micro: w_in must lie in [0,1]");
  }

  Vec jump = Vec::Zero(mesh.num_nodes());
  if (data_.s0_kind == ProblemData::S0Kind::scaled_constant) {
    double s = data_.s0_value * std::pow(dom_.eps, (1.0 + iface_.ell) / 2.0);
    for (const auto& f : map_u_.iface) jump[f.node] = s;
  }
  double s0_sq = 0.0;
  for (const auto& f : map_u_.iface) s0_sq += f.weight * jump[f.node] * jump[f.node];
  if (eps_pow_ * s0_sq > data_.s0_bound)
    throw std::invalid_argument("init_micro: initial jump violates the declared eps^{-ell} bound");

  Vec f1v = eval_to_dofs(mesh, map_u_, data_.f1, 0.0);
  Vec f2v = eval_to_dofs(mesh, map_u_, data_.f2, 0.0);
  Vec rhs_u = mass_u_out_.cwiseProduct(f1v - f2v);
  rhs_u -= Kvu_.mat.transpose() * v_;
  u_ = solve_with_prescribed_jump(jump, rhs_u);

  energy_ = EnergyReport();
  double v0_sq = 0.0;
  {
    const double vol = std::pow(mesh.h, mesh.dim);
    int nodes[8];
    for (int c = 0; c < mesh.num_cells(); ++c) {
      mesh.cell_nodes(c, nodes);
      double avg = 0.0;
      for (int a = 0; a < mesh.corners_per_cell(); ++a) {
        mesh.node_position(nodes[a], x);
        avg += data_.v0(x);
      }
      avg /= mesh.corners_per_cell();
      v0_sq += vol * avg * avg;
    }
  }
  energy_.data_norm_sq = v0_sq + eps_pow_ * s0_sq + 1.0;
  energy_.sup_v_sq = v_.cwiseProduct(v_).dot(mass_v_);
  energy_.sup_jump_sq_scaled = eps_pow_ * jump_norm_sq(u_);
}

double MicroSolver::jump_norm_sq(const Vec& u) const {
  double s = 0.0;
  for (const auto& f : map_u_.iface) {
    double j = u[f.dof_B] - u[f.dof_D];
    s += f.weight * j * j;
  }
  return s;
}

double MicroSolver::l2_sq_domain(const SpaceTimeFn& f, double t) const {
  const Mesh& mesh = dom_.mesh;
  const double vol = std::pow(mesh.h, mesh.dim);
  double total = 0.0;
  double x[3];
  int nodes[8];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    mesh.cell_nodes(c, nodes);
    double avg = 0.0;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      mesh.node_position(nodes[a], x);
      avg += f(x, t);
    }
    avg /= mesh.corners_per_cell();
    total += vol * avg * avg;
  }
  return total;
}

void MicroSolver::accumulate_energy(double dt) {
  const Mesh& mesh = dom_.mesh;
  const Mat E_I = fem::element_stiffness(mesh.dim, mesh.h, Mat::Identity(mesh.dim, mesh.dim));
  const int m = mesh.corners_per_cell();
  double e_vu = 0.0, e_u_out = 0.0, e_u_int = 0.0;
  int nodes[8];
  Vec loc(m), locu(m);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    mesh.cell_nodes(c, nodes);
    if (mesh.phase[c] == Phase::out) {
      for (int a = 0; a < m; ++a) {
        int dv = map_v_.dof_B[nodes[a]];
        int du = map_u_.dof_B[nodes[a]];
        double uv = du >= 0 ? u_[du] : 0.0;
        locu[a] = uv;
        loc[a] = (dv >= 0 ? v_[dv] : 0.0) + uv;
      }
      e_vu += loc.dot(E_I * loc);
      e_u_out += locu.dot(E_I * locu);
    } else {
      for (int a = 0; a < m; ++a) {
        int du = map_u_.dof_D[nodes[a]];
        locu[a] = du >= 0 ? u_[du] : 0.0;
      }
      e_u_int += locu.dot(E_I * locu);
    }
  }
  energy_.grad_v_plus_u += dt * e_vu;
  energy_.grad_u_out += dt * e_u_out;
  energy_.grad_u_int += dt * e_u_int;

  double vsq = v_.cwiseProduct(v_).dot(mass_v_);
  energy_.sup_v_sq = std::max(energy_.sup_v_sq, vsq);
  double jsq = jump_norm_sq(u_);
  energy_.sup_jump_sq_scaled = std::max(energy_.sup_jump_sq_scaled, eps_pow_ * jsq);
  energy_.jump_sq_scaled_time += dt * eps_pow_ * jsq;
  energy_.jump_sq_time_raw += dt * jsq;
  energy_.data_norm_sq += dt * (l2_sq_domain(data_.f1, t_) + l2_sq_domain(data_.f2, t_));

  if (energy_.lhs_total() > 1e6 * energy_.data_norm_sq)
    throw std::runtime_error("micro run aborted: discrete energy exceeds 1e6 x data norms");
}

void MicroSolver::step(double dt) {
  if (dt <= 0) throw std::invalid_argument("step: dt must be positive");
  factor_for_dt(dt);
  ensure_jumpfix();
  const Mesh& mesh = dom_.mesh;
  const double t_next = t_ + dt;

  // (i) gating, exact in q; (ii) explicit ionic term at (v^n, w^{n+1})
  step_gating(ionic_, w_, v_, dt);
  Vec iion(map_v_.num_dofs);
  for (int i = 0; i < map_v_.num_dofs; ++i) iion[i] = ionic_.ionic_current(v_[i], w_[i]);

  Vec f1v = eval_to_dofs(mesh, map_v_, data_.f1, t_next);
  Vec rv = mass_v_.cwiseProduct(v_ / dt - iion + f1v);

  if (!data_.decouple_interface) {
    Vec f1u = eval_to_dofs(mesh, map_u_, data_.f1, t_next);
    Vec f2u = eval_to_dofs(mesh, map_u_, data_.f2, t_next);
    Vec ru = mass_u_out_.cwiseProduct(f1u - f2u);
    ru += eps_pow_ * (iface_.alpha / dt) * (Mg_.mat * u_);
    Vec rhs(map_v_.num_dofs + map_u_.num_dofs);
    rhs << rv, ru;
    Vec sol = coupled_->solve(rhs);
    v_ = sol.head(map_v_.num_dofs);
    u_ = sol.tail(map_u_.num_dofs);
  } else {
    // interface law without its flux source: per-node relaxation ODE
    Vec jump = Vec::Zero(mesh.num_nodes());
    for (const auto& f : map_u_.iface)
      jump[f.node] = (u_[f.dof_B] - u_[f.dof_D]) / (1.0 + iface_.beta * dt / iface_.alpha);
    Vec lift = Vec::Zero(map_u_.num_dofs);
    for (const auto& f : map_u_.iface) lift[f.dof_B] = jump[f.node];
    Vec f1u = eval_to_dofs(mesh, map_u_, data_.f1, t_next);
    Vec f2u = eval_to_dofs(mesh, map_u_, data_.f2, t_next);
    Vec ru = mass_u_out_.cwiseProduct(f1u - f2u) - Kuu_.mat * lift;
    Vec rc = Vec::Zero(map_uc_.num_dofs);
    for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
      int dc = map_uc_.dof_B[nid];
      if (dc < 0) continue;
      if (map_u_.dof_B[nid] >= 0) rc[dc] += ru[map_u_.dof_B[nid]];
      if (map_u_.dof_D[nid] >= 0) rc[dc] += ru[map_u_.dof_D[nid]];
    }
    Vec rv2 = rv - Kvu_.mat * lift;
    Vec rhs(map_v_.num_dofs + map_uc_.num_dofs);
    rhs << rv2, rc;
    Vec sol = coupled_->solve(rhs);
    v_ = sol.head(map_v_.num_dofs);
    Vec z = sol.tail(map_uc_.num_dofs);
    u_ = lift;
    for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
      int dc = map_uc_.dof_B[nid];
      if (dc < 0) continue;
      if (map_u_.dof_B[nid] >= 0) u_[map_u_.dof_B[nid]] += z[dc];
      if (map_u_.dof_D[nid] >= 0) u_[map_u_.dof_D[nid]] += z[dc];
    }
  }

  t_ = t_next;
  accumulate_energy(dt);
}

std::pair<MicroTrajectory, EnergyReport> MicroSolver::run(
    double dt, const std::vector<double>& sample_times) {
  if (dt > 1.0 / (2.0 * ionic_.C_I))
    throw std::invalid_argument("run_micro: dt exceeds the ionic stability bound dt <= 1/(2 C_I)");
  init();
  const long nsteps = std::lround(data_.T / dt);
  if (nsteps < 1 || std::abs(nsteps * dt - data_.T) > 1e-9 * std::max(data_.T, 1.0))
    throw std::invalid_argument("run_micro: horizon T must be an integer multiple of dt");

  std::vector<long> snap_at;
  for (double s : sample_times) {
    long idx = std::lround(s / dt);
    if (idx < 0 || idx > nsteps)
      throw std::invalid_argument("run_micro: sample time outside [0, T]");
    snap_at.push_back(idx);
  }

  MicroTrajectory traj;
  auto maybe_snap = [&](long n) {
    for (std::size_t i = 0; i < snap_at.size(); ++i)
      if (snap_at[i] == n) {
        traj.times.push_back(t_);
        traj.v.push_back(v_);
        traj.u.push_back(u_);
        traj.w.push_back(w_);
        break;
      }
  };
  maybe_snap(0);
  for (long n = 1; n <= nsteps; ++n) {
    step(dt);
    maybe_snap(n);
  }
  return {std::move(traj), energy_};
}

Vec local_cell_average(const DomainGeometry& dom, const fem::DofMap& map, const Vec& field,
                       AverageMode mode) {
  const Mesh& mesh = dom.mesh;
  const int n = dom.cell.spec.resolution;
  const int k = dom.k;
  const int kz = mesh.dim == 3 ? k : 1;
  const long nmacro = static_cast<long>(k) * k * kz;
  Vec sum = Vec::Zero(nmacro);
  Vec meas = Vec::Zero(nmacro);
  const double vol = std::pow(mesh.h, mesh.dim);
  int nodes[8];
  int ijk[3];
  for (int c = 0; c < mesh.num_cells(); ++c) {
    bool is_out = mesh.phase[c] == Phase::out;
    if (mode == AverageMode::out_normalized && !is_out) continue;
    mesh.cell_coords(c, ijk);
    long mc =
        (ijk[0] / n) + static_cast<long>(k) * ((ijk[1] / n) + static_cast<long>(k) * (ijk[2] / n));
    mesh.cell_nodes(c, nodes);
    const auto& side = is_out ? map.dof_B : map.dof_D;
    double avg = 0.0;
    for (int a = 0; a < mesh.corners_per_cell(); ++a) {
      int d = side[nodes[a]];
      if (d >= 0) avg += field[d];
    }
    avg /= mesh.corners_per_cell();
    sum[mc] += vol * avg;
    meas[mc] += vol;
  }
  for (long mc = 0; mc < nmacro; ++mc) sum[mc] = meas[mc] > 0 ? sum[mc] / meas[mc] : 0.0;
  return sum;
}

}  // namespace bidhom
