#include "bidhom/cell_problems.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <thread>

namespace bidhom {

using fem::PhaseSel;

void Coefficients::validate(const Mesh& mesh) const {
  if (!(c0 > 0.0) || !(c0_tilde >= c0))
    throw std::invalid_argument("coefficients: need 0 < c0 <= c0_tilde");
  std::mt19937 rng(12345);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int dim = mesh.dim;
  auto check_field = [&](const fem::MatrixField& f, const char* name) {
    if (f.dim() != dim) throw std::invalid_argument(std::string(name) + ": dimension mismatch");
    if (!f.is_constant() && f.table_size() != static_cast<std::size_t>(mesh.num_cells()))
      throw std::invalid_argument(std::string(name) + ": per-cell table size mismatch");
    int ncheck = f.is_constant() ? 1 : mesh.num_cells();
    for (int c = 0; c < ncheck; ++c) {
      const Mat& s = f.at(c);
      if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff()))
        throw std::invalid_argument(std::string(name) + ": matrix not symmetric");
      for (int trial = 0; trial < 8; ++trial) {
        Vec z(dim);
        for (int d = 0; d < dim; ++d) z[d] = gauss(rng);
        double zz = z.squaredNorm();
        double quad = z.dot(s * z);
        if (quad < c0 * zz * (1.0 - 1e-10) || quad > c0_tilde * zz * (1.0 + 1e-10))
          throw std::invalid_argument(std::string(name) + ": ellipticity bounds violated");
      }
    }
  };
  check_field(sigma_int, "sigma_int");
  check_field(sigma_out, "sigma_out");
  check_field(sigma_dis, "sigma_dis");
}

InterfaceParams::Regime InterfaceParams::regime() const {
  if (ell < -1.0 - 1e-12) throw std::invalid_argument("interface: ell >= -1 required");
  if (std::abs(ell + 1.0) <= 1e-12) return Regime::minus_one;
  if (std::abs(ell - 1.0) <= 1e-12) return Regime::one;
  if (ell < 1.0) return Regime::mid;
  return Regime::above_one;
}

void InterfaceParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("interface: alpha and beta must be strictly positive");
  regime();
}

CellSolver::CellSolver(const CellGeometry& cell, const Coefficients& coeffs, double tol,
                       int threads)
    : cell_(cell), co_(coeffs), tol_(tol), threads_(threads) {
  co_.validate(cell_.mesh);
  map_out_ = fem::make_scalar_dofmap(cell_.mesh, PhaseSel::out_only, false);
  map_all_ = fem::make_scalar_dofmap(cell_.mesh, PhaseSel::both, false);
  map_jump_ = fem::make_jump_dofmap(cell_.mesh, false);
  if (cell_.cells_int > 0) map_int_ = fem::make_scalar_dofmap(cell_.mesh, PhaseSel::int_only, false);
}

namespace {

void check_component_sums(const fem::DofMap& map, const Vec& b) {
  Vec sums = Vec::Zero(std::max(map.num_components, 1));
  for (int d = 0; d < map.num_dofs; ++d) sums[map.component[d]] += b[d];
  double scale = std::max(b.norm(), 1e-300);
  for (int c = 0; c < map.num_components; ++c)
    if (std::abs(sums[c]) > 1e-10 * scale)
      throw std::runtime_error("cell problem: incompatible Neumann data");
}

void run_directions(int dim, int threads, const std::function<void(int)>& job) {
  if (threads <= 1) {
    for (int j = 0; j < dim; ++j) job(j);
    return;
  }
  std::vector<std::thread> pool;
  for (int j = 0; j < dim; ++j) pool.emplace_back(job, j);
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<Vec> CellSolver::solve_neumann_family(const fem::DofMap& map,
                                                  const fem::MatrixField& sigma,
                                                  PhaseSel sel) const {
  const Mesh& mesh = cell_.mesh;
  fem::SparseOperator K = fem::assemble_stiffness(mesh, map, sigma, sel, threads_);
  fem::apply_pins(K, map.pins);
  const int dim = mesh.dim;
  std::vector<Vec> result(dim);
  run_directions(dim, threads_, [&](int j) {
    Vec b = fem::gradient_load(mesh, map, sigma, sel, j);
    check_component_sums(map, b);
    for (int p : map.pins) b[p] = 0.0;
    fem::SolveOptions opts;
    opts.tol = tol_;
    auto [x, rep] = fem::solve_spd(K, b, opts);
    fem::project_zero_mean(mesh, map, sel, x);
    result[j] = std::move(x);
  });
  return result;
}

std::vector<Vec> CellSolver::solve_zeta() const {
  return solve_neumann_family(map_out_, co_.sigma_int, PhaseSel::out_only);
}

std::vector<Vec> CellSolver::solve_chi0() const {
  const Mesh& mesh = cell_.mesh;
  fem::SparseOperator K = fem::assemble_stiffness(mesh, map_all_, co_.sigma_out,
                                                  PhaseSel::out_only, threads_);
  if (cell_.cells_int > 0) {
    fem::SparseOperator Kd =
        fem::assemble_stiffness(mesh, map_all_, co_.sigma_dis, PhaseSel::int_only, threads_);
    K.mat += Kd.mat;
  }
  fem::apply_pins(K, map_all_.pins);
  std::vector<Vec> result(mesh.dim);
  run_directions(mesh.dim, threads_, [&](int j) {
    Vec b = fem::gradient_load(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, j);
    if (cell_.cells_int > 0)
      b += fem::gradient_load(mesh, map_all_, co_.sigma_dis, PhaseSel::int_only, j);
    check_component_sums(map_all_, b);
    for (int p : map_all_.pins) b[p] = 0.0;
    fem::SolveOptions opts;
    opts.tol = tol_;
    auto [x, rep] = fem::solve_spd(K, b, opts);
    fem::project_zero_mean(mesh, map_all_, PhaseSel::both, x);
    result[j] = std::move(x);
  });
  return result;
}

std::pair<std::vector<Vec>, std::vector<Vec>> CellSolver::solve_chi0_neumann() const {
  std::vector<Vec> B = solve_neumann_family(map_out_, co_.sigma_out, PhaseSel::out_only);
  std::vector<Vec> D;
  if (cell_.cells_int > 0)
    D = solve_neumann_family(map_int_, co_.sigma_dis, PhaseSel::int_only);
  return {std::move(B), std::move(D)};
}

Vec CellSolver::chi1_initial_jump(int dir, const std::vector<Vec>& chi0) const {
  // discrete weak flux of the chi0 system against Gamma-supported tests:
  // l_i = int over Y_out of sigma_out (e_dir - grad chi0) . grad phi_i
  const Mesh& mesh = cell_.mesh;
  Vec jump = Vec::Zero(mesh.num_nodes());
  if (map_jump_.iface.empty()) return jump;
  fem::SparseOperator Kout =
      fem::assemble_stiffness(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, threads_);
  Vec bout = fem::gradient_load(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, dir);
  Vec resid = bout - Kout.mat * chi0[dir];
  // l_i = alpha w_i [chi1](0)_i with lumped weights; alpha is divided out by
  // the caller
  for (const fem::InterfaceDof& f : map_jump_.iface)
    jump[f.node] = resid[map_all_.dof_B[f.node]] / f.weight;
  return jump;
}

Vec CellSolver::facet_to_nodal(const std::vector<double>& s_facet) const {
  const Mesh& mesh = cell_.mesh;
  if (s_facet.size() != mesh.facets.size())
    throw std::invalid_argument("facet_to_nodal: datum size does not match facet count");
  Vec acc = Vec::Zero(mesh.num_nodes());
  std::vector<double> w = interface_node_weights(mesh);
  const double share = 1.0 / mesh.nodes_per_facet();
  for (std::size_t f = 0; f < mesh.facets.size(); ++f)
    for (int a = 0; a < mesh.nodes_per_facet(); ++a)
      acc[mesh.facets[f].nodes[a]] += mesh.facets[f].area * share * s_facet[f];
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (w[n] > 0) acc[n] /= w[n];
  return acc;
}

Vec CellSolver::harmonic_from_jump(const Vec& jump_nodal) const {
  const Mesh& mesh = cell_.mesh;
  // lift: jump carried on the B-side trace
  Vec lift = Vec::Zero(map_jump_.num_dofs);
  for (const fem::InterfaceDof& f : map_jump_.iface) lift[f.dof_B] = jump_nodal[f.node];

  fem::SparseOperator Kj =
      fem::assemble_stiffness(mesh, map_jump_, co_.sigma_out, PhaseSel::out_only, threads_);
  if (cell_.cells_int > 0) {
    fem::SparseOperator Kd =
        fem::assemble_stiffness(mesh, map_jump_, co_.sigma_dis, PhaseSel::int_only, threads_);
    Kj.mat += Kd.mat;
  }
  Vec r = Kj.mat * lift;

  // fold to the continuous map and solve for the jump-free correction
  Vec rhs = Vec::Zero(map_all_.num_dofs);
  for (int node = 0; node < mesh.num_nodes(); ++node) {
    int ad = map_all_.dof_B[node];
    if (ad < 0) continue;
    if (map_jump_.dof_B[node] >= 0) rhs[ad] -= r[map_jump_.dof_B[node]];
    if (map_jump_.dof_D[node] >= 0) rhs[ad] -= r[map_jump_.dof_D[node]];
  }
  fem::SparseOperator Kc =
      fem::assemble_stiffness(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, threads_);
  if (cell_.cells_int > 0) {
    fem::SparseOperator Kd =
        fem::assemble_stiffness(mesh, map_all_, co_.sigma_dis, PhaseSel::int_only, threads_);
    Kc.mat += Kd.mat;
  }
  fem::apply_pins(Kc, map_all_.pins);
  for (int p : map_all_.pins) rhs[p] = 0.0;
  fem::SolveOptions opts;
  opts.tol = tol_;
  auto [z, rep] = fem::solve_spd(Kc, rhs, opts);

  Vec field = lift;
  for (int node = 0; node < mesh.num_nodes(); ++node) {
    int ad = map_all_.dof_B[node];
    if (ad < 0) continue;
    if (map_jump_.dof_B[node] >= 0) field[map_jump_.dof_B[node]] += z[ad];
    if (map_jump_.dof_D[node] >= 0) field[map_jump_.dof_D[node]] += z[ad];
  }
  fem::project_zero_mean(mesh, map_jump_, PhaseSel::both, field);
  return field;
}

std::vector<Vec> CellSolver::evolve_jump_series(const InterfaceParams& iface, double dt_kernel,
                                                int K, const Vec& initial_jump) const {
  const Mesh& mesh = cell_.mesh;
  std::vector<Vec> series;
  series.reserve(K + 1);
  if (map_jump_.iface.empty()) {
    series.assign(K + 1, Vec::Zero(map_jump_.num_dofs));
    return series;
  }
  series.push_back(harmonic_from_jump(initial_jump));

  fem::SparseOperator Kj =
      fem::assemble_stiffness(mesh, map_jump_, co_.sigma_out, PhaseSel::out_only, threads_);
  if (cell_.cells_int > 0) {
    fem::SparseOperator Kd =
        fem::assemble_stiffness(mesh, map_jump_, co_.sigma_dis, PhaseSel::int_only, threads_);
    Kj.mat += Kd.mat;
  }
  fem::SparseOperator Mg = fem::assemble_interface_mass(mesh, map_jump_);
  fem::SparseOperator A;
  A.mat = Kj.mat + (iface.alpha / dt_kernel + iface.beta) * Mg.mat;
  A.symmetric = true;
  fem::apply_pins(A, map_jump_.pins);
  fem::FactorizedOperator solver(A);

  for (int k = 1; k <= K; ++k) {
    Vec rhs = (iface.alpha / dt_kernel) * (Mg.mat * series.back());
    for (int p : map_jump_.pins) rhs[p] = 0.0;
    Vec x = solver.solve(rhs);
    fem::project_zero_mean(mesh, map_jump_, PhaseSel::both, x);
    series.push_back(std::move(x));
  }
  return series;
}

std::vector<std::vector<Vec>> CellSolver::solve_chi1(const InterfaceParams& iface,
                                                     double dt_kernel, int K,
                                                     const std::vector<Vec>& chi0) const {
  if (dt_kernel <= 0) throw std::invalid_argument("solve_chi1: dt_kernel must be positive");
  if (chi0.size() != static_cast<std::size_t>(cell_.mesh.dim))
    throw std::invalid_argument("solve_chi1: chi0 must be solved first");
  std::vector<std::vector<Vec>> out(cell_.mesh.dim);
  run_directions(cell_.mesh.dim, threads_, [&](int j) {
    Vec jump0 = chi1_initial_jump(j, chi0) / iface.alpha;
    out[j] = evolve_jump_series(iface, dt_kernel, K, jump0);
  });
  return out;
}

std::vector<Vec> CellSolver::solve_T_s1(const InterfaceParams& iface,
                                        const std::vector<double>& s1_facet, double dt_kernel,
                                        int K) const {
  return solve_T_s1_nodal(iface, facet_to_nodal(s1_facet), dt_kernel, K);
}

std::vector<Vec> CellSolver::solve_T_s1_nodal(const InterfaceParams& iface, const Vec& s1_nodal,
                                              double dt_kernel, int K) const {
  if (dt_kernel <= 0) throw std::invalid_argument("solve_T_s1: dt_kernel must be positive");
  Vec jump0 = s1_nodal / iface.alpha;
  return evolve_jump_series(iface, dt_kernel, K, jump0);
}

Vec CellSolver::flux_both_jump(const Vec& x) const {
  Vec f = fem::flux_integral(cell_.mesh, map_jump_, co_.sigma_out, PhaseSel::out_only, x);
  if (cell_.cells_int > 0)
    f += fem::flux_integral(cell_.mesh, map_jump_, co_.sigma_dis, PhaseSel::int_only, x);
  return f;
}

double CellSolver::jump_norm_sq(const Vec& x) const {
  double s = 0.0;
  for (const fem::InterfaceDof& f : map_jump_.iface) {
    double j = x[f.dof_B] - x[f.dof_D];
    s += f.weight * j * j;
  }
  return s;
}

namespace {

// integral over the selected cells of the coefficient matrix itself
Mat sigma_integral(const Mesh& mesh, const fem::MatrixField& sigma, PhaseSel sel) {
  Mat total = Mat::Zero(mesh.dim, mesh.dim);
  const double vol = std::pow(mesh.h, mesh.dim);
  for (int c = 0; c < mesh.num_cells(); ++c)
    if (fem::selects(sel, mesh.phase[c])) total += vol * sigma.at(c);
  return total;
}

void check_dual_forms(const Mat& flux_form, const Mat& energy_form, const char* name) {
  double scale = std::max(flux_form.cwiseAbs().maxCoeff(), 1.0);
  if ((flux_form - energy_form).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::runtime_error(std::string(name) +
                             ": flux and energy forms disagree beyond 1e-9; solver tolerance "
                             "too loose");
}

}  // namespace

EffectiveTensors CellSolver::compute_effective(InterfaceParams::Regime regime,
                                               const CellCorrectors& cor) const {
  const Mesh& mesh = cell_.mesh;
  const int dim = mesh.dim;
  const double inv_vol_out = 1.0 / cell_.vol_out;

  EffectiveTensors T;
  T.dim = dim;
  T.vol_out = cell_.vol_out;
  T.vol_int = cell_.vol_int;
  T.area_gamma = cell_.area_gamma;
  T.dt_kernel = cor.dt_kernel;
  T.K = cor.K;

  auto need = [&](bool ok, const char* what) {
    if (!ok)
      throw std::invalid_argument(std::string("compute_effective: missing corrector ") + what +
                                  " for the requested regime");
  };
  need(cor.zeta.size() == static_cast<std::size_t>(dim), "zeta");

  // A1 from zeta: both the flux and the quadratic form of the defining
  // integral, cross-checked.
  {
    fem::SparseOperator K =
        fem::assemble_stiffness(mesh, map_out_, co_.sigma_int, PhaseSel::out_only, threads_);
    Mat sint = sigma_integral(mesh, co_.sigma_int, PhaseSel::out_only);
    Mat flux_form(dim, dim), energy_form(dim, dim);
    std::vector<Vec> loads(dim);
    for (int j = 0; j < dim; ++j)
      loads[j] = fem::gradient_load(mesh, map_out_, co_.sigma_int, PhaseSel::out_only, j);
    for (int j = 0; j < dim; ++j) {
      Vec fl = fem::flux_integral(mesh, map_out_, co_.sigma_int, PhaseSel::out_only, cor.zeta[j]);
      for (int i = 0; i < dim; ++i) {
        flux_form(i, j) = inv_vol_out * (sint(i, j) - fl[i]);
        energy_form(i, j) =
            inv_vol_out * (sint(i, j) - loads[j].dot(cor.zeta[i]) - loads[i].dot(cor.zeta[j]) +
                           cor.zeta[i].dot(K.mat * cor.zeta[j]));
      }
    }
    check_dual_forms(flux_form, energy_form, "A1");
    T.A1 = flux_form;
  }

  if (regime == InterfaceParams::Regime::one || regime == InterfaceParams::Regime::above_one) {
    need(cor.chi0.size() == static_cast<std::size_t>(dim), "chi0");
    fem::SparseOperator K =
        fem::assemble_stiffness(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, threads_);
    if (cell_.cells_int > 0) {
      fem::SparseOperator Kd =
          fem::assemble_stiffness(mesh, map_all_, co_.sigma_dis, PhaseSel::int_only, threads_);
      K.mat += Kd.mat;
    }
    Mat sboth = sigma_integral(mesh, co_.sigma_out, PhaseSel::out_only);
    if (cell_.cells_int > 0) sboth += sigma_integral(mesh, co_.sigma_dis, PhaseSel::int_only);
    Mat flux_form(dim, dim), energy_form(dim, dim);
    std::vector<Vec> loads(dim);
    for (int j = 0; j < dim; ++j) {
      loads[j] = fem::gradient_load(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, j);
      if (cell_.cells_int > 0)
        loads[j] += fem::gradient_load(mesh, map_all_, co_.sigma_dis, PhaseSel::int_only, j);
    }
    for (int j = 0; j < dim; ++j) {
      Vec fl = fem::flux_integral(mesh, map_all_, co_.sigma_out, PhaseSel::out_only, cor.chi0[j]);
      if (cell_.cells_int > 0)
        fl += fem::flux_integral(mesh, map_all_, co_.sigma_dis, PhaseSel::int_only, cor.chi0[j]);
      for (int i = 0; i < dim; ++i) {
        flux_form(i, j) = inv_vol_out * (sboth(i, j) - fl[i]);
        energy_form(i, j) =
            inv_vol_out * (sboth(i, j) - loads[j].dot(cor.chi0[i]) - loads[i].dot(cor.chi0[j]) +
                           cor.chi0[i].dot(K.mat * cor.chi0[j]));
      }
    }
    check_dual_forms(flux_form, energy_form, "A2");
    T.A2 = flux_form;
  }

  if (regime == InterfaceParams::Regime::mid || regime == InterfaceParams::Regime::minus_one) {
    need(cor.chi0_B.size() == static_cast<std::size_t>(dim), "chi0_B");
    {
      fem::SparseOperator K =
          fem::assemble_stiffness(mesh, map_out_, co_.sigma_out, PhaseSel::out_only, threads_);
      Mat sout = sigma_integral(mesh, co_.sigma_out, PhaseSel::out_only);
      Mat flux_form(dim, dim), energy_form(dim, dim);
      std::vector<Vec> loads(dim);
      for (int j = 0; j < dim; ++j)
        loads[j] = fem::gradient_load(mesh, map_out_, co_.sigma_out, PhaseSel::out_only, j);
      for (int j = 0; j < dim; ++j) {
        Vec fl =
            fem::flux_integral(mesh, map_out_, co_.sigma_out, PhaseSel::out_only, cor.chi0_B[j]);
        for (int i = 0; i < dim; ++i) {
          flux_form(i, j) = inv_vol_out * (sout(i, j) - fl[i]);
          energy_form(i, j) = inv_vol_out * (sout(i, j) - loads[j].dot(cor.chi0_B[i]) -
                                             loads[i].dot(cor.chi0_B[j]) +
                                             cor.chi0_B[i].dot(K.mat * cor.chi0_B[j]));
        }
      }
      check_dual_forms(flux_form, energy_form, "A2_B");
      T.A2_B = flux_form;
    }
    T.A2_D = Mat::Zero(dim, dim);
    if (cell_.cells_int > 0 && !cor.chi0_D.empty()) {
      fem::SparseOperator K =
          fem::assemble_stiffness(mesh, map_int_, co_.sigma_dis, PhaseSel::int_only, threads_);
      Mat sdis = sigma_integral(mesh, co_.sigma_dis, PhaseSel::int_only);
      Mat flux_form(dim, dim), energy_form(dim, dim);
      std::vector<Vec> loads(dim);
      for (int j = 0; j < dim; ++j)
        loads[j] = fem::gradient_load(mesh, map_int_, co_.sigma_dis, PhaseSel::int_only, j);
      for (int j = 0; j < dim; ++j) {
        Vec fl =
            fem::flux_integral(mesh, map_int_, co_.sigma_dis, PhaseSel::int_only, cor.chi0_D[j]);
        for (int i = 0; i < dim; ++i) {
          flux_form(i, j) = inv_vol_out * (sdis(i, j) - fl[i]);
          energy_form(i, j) = inv_vol_out * (sdis(i, j) - loads[j].dot(cor.chi0_D[i]) -
                                             loads[i].dot(cor.chi0_D[j]) +
                                             cor.chi0_D[i].dot(K.mat * cor.chi0_D[j]));
        }
      }
      check_dual_forms(flux_form, energy_form, "A2_D");
      T.A2_D = flux_form;
    }
  }

  if (regime == InterfaceParams::Regime::one) {
    need(!cor.chi1.empty(), "chi1");
    const int K = cor.K;
    T.B.reserve(K + 1);
    for (int k = 0; k <= K; ++k) {
      Mat Bk(dim, dim);
      for (int j = 0; j < dim; ++j) {
        Vec fl = flux_both_jump(cor.chi1[j][k]);
        for (int i = 0; i < dim; ++i) Bk(i, j) = -inv_vol_out * fl[i];
      }
      T.B.push_back(std::move(Bk));
    }
    double b0 = T.B.front().cwiseAbs().maxCoeff();
    T.kernel_tail_ratio = b0 > 0 ? T.B.back().cwiseAbs().maxCoeff() / b0 : 0.0;
    if (!cor.T_s1.empty()) {
      T.F_cellflux.reserve(K + 1);
      for (int k = 0; k <= K; ++k) T.F_cellflux.push_back(flux_both_jump(cor.T_s1[k]));
    }
  }
  return T;
}

CellCorrectors solve_all_correctors(const CellSolver& solver, const InterfaceParams& iface,
                                    double dt_kernel, int K, const std::vector<double>* s1_facet) {
  CellCorrectors cor;
  cor.zeta = solver.solve_zeta();
  cor.dt_kernel = dt_kernel;
  cor.K = K;
  switch (iface.regime()) {
    case InterfaceParams::Regime::one:
      cor.chi0 = solver.solve_chi0();
      cor.chi1 = solver.solve_chi1(iface, dt_kernel, K, cor.chi0);
      if (s1_facet) cor.T_s1 = solver.solve_T_s1(iface, *s1_facet, dt_kernel, K);
      break;
    case InterfaceParams::Regime::above_one:
      cor.chi0 = solver.solve_chi0();
      cor.K = 0;
      break;
    case InterfaceParams::Regime::mid:
    case InterfaceParams::Regime::minus_one: {
      auto [B, D] = solver.solve_chi0_neumann();
      cor.chi0_B = std::move(B);
      cor.chi0_D = std::move(D);
      break;
    }
  }
  return cor;
}

}  // namespace bidhom
