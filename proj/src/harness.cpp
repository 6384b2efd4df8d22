#include "bidhom/harness.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "bidhom/report.hpp"

namespace bidhom {

namespace fs = std::filesystem;
using nlohmann::json;

std::string resolve_out_dir(const SimConfig& cfg, const HarnessOptions& opts) {
  return opts.out_dir.empty() ? cfg.out_dir : opts.out_dir;
}

std::string resolve_cache_dir(const SimConfig& cfg, const HarnessOptions& opts) {
  if (!opts.cache_dir.empty()) return opts.cache_dir;
  if (const char* env = std::getenv("BIDHOM_CACHE_DIR"); env && *env) return env;
  return (fs::path(resolve_out_dir(cfg, opts)) / "tensor_cache").string();
}

TensorResult compute_or_load_tensors(const SimConfig& cfg, const HarnessOptions& opts) {
  TensorCache cache(resolve_cache_dir(cfg, opts));
  const std::uint64_t key = TensorCache::fnv1a(cfg.tensor_key_material());

  bool corrupt = false;
  if (auto cached = cache.load(key, &corrupt)) {
    *opts.log << "tensors: cache hit (" << cache.entry_path(key) << ")\n";
    return {std::move(*cached), true};
  }
  if (corrupt)
    *opts.log << "tensors: warning: corrupt cache entry " << cache.entry_path(key)
              << ", recomputing\n";

  CellGeometry cell = build_unit_cell(cfg.cell_spec);
  Coefficients coeffs = cfg.make_coefficients(cell.mesh);
  // cell problems always run at a tight tolerance so the dual tensor forms
  // agree to 1e-9
  CellSolver solver(cell, coeffs, std::min(cfg.solver_tol, 1e-12), opts.threads);
  auto s1 = cfg.make_s1_facet(cell);
  CellCorrectors cor = solve_all_correctors(solver, cfg.iface, cfg.kernel_dt(), cfg.kernel_steps,
                                            s1 ? &*s1 : nullptr);
  EffectiveTensors tensors = solver.compute_effective(cfg.iface.regime(), cor);
  tensors.key_hash = key;
  cache.store(key, tensors);
  *opts.log << "tensors: computed and cached (" << cache.entry_path(key) << ")\n";
  return {std::move(tensors), false};
}

namespace {

std::string fmt(double v) { return format_g17(v); }

void write_tensor_summary(const EffectiveTensors& t, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "tensors.txt", std::ios::binary);
  if (!out) throw IoError("cannot write tensors.txt");
  out << TensorCache::serialize(t);
}

void write_micro_csvs(const DomainGeometry& dom, const MicroSolver& solver,
                      const MicroTrajectory& traj, const std::string& out_dir) {
  const Mesh& mesh = dom.mesh;
  const auto& map_v = solver.v_map();
  const auto& map_u = solver.u_map();
  // phase adjacency straight from the cells (dof maps drop Dirichlet nodes)
  std::vector<std::uint8_t> out_adj(mesh.num_nodes(), 0), int_adj(mesh.num_nodes(), 0);
  {
    int nodes[8];
    for (int c = 0; c < mesh.num_cells(); ++c) {
      mesh.cell_nodes(c, nodes);
      auto& adj = mesh.phase[c] == Phase::out ? out_adj : int_adj;
      for (int a = 0; a < mesh.corners_per_cell(); ++a) adj[nodes[a]] = 1;
    }
  }
  auto phase_label = [&](int nid) -> std::string {
    if (out_adj[nid] && int_adj[nid]) return "iface";
    return int_adj[nid] ? "int" : "out";
  };
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {"node", "x1", "x2"};
    if (mesh.dim == 3) header.push_back("x3");
    header.insert(header.end(), {"phase", "v", "u_B", "u_D", "w", "jump"});
    rows.push_back(header);
    double x[3];
    for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
      mesh.node_position(nid, x);
      std::vector<std::string> row = {std::to_string(nid), fmt(x[0]), fmt(x[1])};
      if (mesh.dim == 3) row.push_back(fmt(x[2]));
      bool dirichlet = mesh.node_on_boundary(nid);
      row.push_back(phase_label(nid));
      int dv = map_v.dof_B[nid];
      row.push_back(dv >= 0 ? fmt(traj.v[s][dv])
                            : (dirichlet && out_adj[nid] ? fmt(0.0) : std::string()));
      int db = map_u.dof_B[nid], dd = map_u.dof_D[nid];
      row.push_back(db >= 0 ? fmt(traj.u[s][db])
                            : (dirichlet && out_adj[nid] ? fmt(0.0) : std::string()));
      row.push_back(dd >= 0 ? fmt(traj.u[s][dd])
                            : (dirichlet && int_adj[nid] ? fmt(0.0) : std::string()));
      row.push_back(dv >= 0 ? fmt(traj.w[s][dv]) : std::string());
      row.push_back(db >= 0 && dd >= 0
                        ? fmt(traj.u[s][db] - traj.u[s][dd])
                        : (out_adj[nid] && int_adj[nid] ? fmt(0.0) : std::string()));
      rows.push_back(std::move(row));
    }
    char name[64];
    std::snprintf(name, sizeof name, "micro_t%03zu.csv", s);
    write_csv(rows, (fs::path(out_dir) / name).string());
  }
}

void write_macro_csvs(const MacroSolver& solver, const MacroTrajectory& traj,
                      const std::string& out_dir, bool tridomain) {
  const Mesh& mesh = solver.mesh();
  const auto& map = solver.map();
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header = {"node", "x1", "x2"};
    if (mesh.dim == 3) header.push_back("x3");
    header.insert(header.end(), {"field", "value"});
    rows.push_back(header);
    auto emit = [&](const char* field, const fem::Vec& vec) {
      double x[3];
      for (int nid = 0; nid < mesh.num_nodes(); ++nid) {
        mesh.node_position(nid, x);
        int d = map.dof_B[nid];
        std::vector<std::string> row = {std::to_string(nid), fmt(x[0]), fmt(x[1])};
        if (mesh.dim == 3) row.push_back(fmt(x[2]));
        row.push_back(field);
        row.push_back(fmt(d >= 0 ? vec[d] : 0.0));
        rows.push_back(std::move(row));
      }
    };
    emit("v", traj.v[s]);
    if (tridomain) {
      emit("u_B", traj.uB[s]);
      emit("u_D", traj.uD[s]);
      emit("jump", traj.jump[s]);
    } else {
      emit("u", traj.u[s]);
    }
    emit("w", traj.w[s]);
    char name[64];
    std::snprintf(name, sizeof name, "macro_t%03zu.csv", s);
    write_csv(rows, (fs::path(out_dir) / name).string());
  }
}

void write_report(const json& body, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "report.json", std::ios::binary);
  if (!out) throw IoError("cannot write report.json");
  out << body.dump(2) << "\n";
}

MacroSolver::Regime macro_regime(const InterfaceParams& iface) {
  switch (iface.regime()) {
    case InterfaceParams::Regime::one:
    case InterfaceParams::Regime::above_one:
      return MacroSolver::Regime::memory;  // above_one carries an empty kernel
    case InterfaceParams::Regime::mid:
      return MacroSolver::Regime::mid;
    case InterfaceParams::Regime::minus_one:
      return MacroSolver::Regime::tridomain;
  }
  throw std::logic_error("unreachable");
}

}  // namespace

void cmd_tensors(const SimConfig& cfg, const HarnessOptions& opts) {
  auto result = compute_or_load_tensors(cfg, opts);
  write_tensor_summary(result.tensors, resolve_out_dir(cfg, opts));
  *opts.log << "A1 =\n" << result.tensors.A1 << "\n";
}

void cmd_kernel(const SimConfig& cfg, const HarnessOptions& opts) {
  if (cfg.iface.regime() != InterfaceParams::Regime::one)
    throw ConfigError({"kernel: the memory kernel exists only for ell = 1"});
  auto result = compute_or_load_tensors(cfg, opts);
  const auto& t = result.tensors;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"k", "t"};
  for (int i = 0; i < t.dim; ++i)
    for (int j = 0; j < t.dim; ++j)
      header.push_back("B" + std::to_string(i + 1) + std::to_string(j + 1));
  rows.push_back(header);
  for (std::size_t k = 0; k < t.B.size(); ++k) {
    std::vector<std::string> row = {std::to_string(k), fmt(k * t.dt_kernel)};
    for (int i = 0; i < t.dim; ++i)
      for (int j = 0; j < t.dim; ++j) row.push_back(fmt(t.B[k](i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(rows, (fs::path(resolve_out_dir(cfg, opts)) / "kernel.csv").string());
}

void cmd_run(const SimConfig& cfg, const HarnessOptions& opts, const std::string& solver_kind) {
  const auto start = std::chrono::steady_clock::now();
  const std::string out_dir = resolve_out_dir(cfg, opts);
  json report;
  report["command"] = "run";
  report["solver"] = solver_kind;

  if (solver_kind == "micro") {
    if (cfg.dt > 1.0 / (2.0 * cfg.make_ionic().C_I))
      throw ConfigError({"numerics.dt: exceeds the ionic stability bound dt <= 1/(2 C_I)"});
    CellGeometry cell = build_unit_cell(cfg.cell_spec);
    DomainGeometry dom = tile_domain(cell, cfg.eps_denominators.front());
    MicroSolver solver(dom, cfg.make_coefficients(cell.mesh), cfg.iface, cfg.make_ionic(),
                       cfg.make_micro_data(cell.mesh.dim));
    auto [traj, energy] = solver.run(cfg.dt, cfg.sample_times);
    write_micro_csvs(dom, solver, traj, out_dir);
    report["eps"] = dom.eps;
    report["energy"] = {{"sup_v_sq", energy.sup_v_sq},
                        {"grad_v_plus_u", energy.grad_v_plus_u},
                        {"grad_u_out", energy.grad_u_out},
                        {"grad_u_int", energy.grad_u_int},
                        {"sup_jump_sq_scaled", energy.sup_jump_sq_scaled},
                        {"jump_sq_scaled_time", energy.jump_sq_scaled_time},
                        {"data_norm_sq", energy.data_norm_sq},
                        {"constant", energy.constant()}};
  } else if (solver_kind == "macro") {
    auto tensors = compute_or_load_tensors(cfg, opts);
    MacroSolver solver(cfg.cell_spec.dim, cfg.macro_resolution, tensors.tensors, cfg.iface,
                       cfg.make_ionic(), cfg.make_macro_data(cfg.cell_spec.dim),
                       macro_regime(cfg.iface), cfg.cell_spec.topology);
    auto traj = solver.run(cfg.dt, cfg.sample_times);
    bool tri = macro_regime(cfg.iface) == MacroSolver::Regime::tridomain;
    write_macro_csvs(solver, traj, out_dir, tri);
    if (traj.kernel_truncation_hits > 0)
      *opts.log << "run: warning: memory kernel truncated beyond its horizon ("
                << traj.kernel_truncation_hits << " evaluations), tail ratio "
                << tensors.tensors.kernel_tail_ratio << "\n";
    report["kernel_truncation_hits"] = traj.kernel_truncation_hits;
  } else {
    throw ConfigError({"run: solver must be 'micro' or 'macro'"});
  }

  const auto stop = std::chrono::steady_clock::now();
  report["runtime_seconds"] = std::chrono::duration<double>(stop - start).count();
  write_report(report, out_dir);
}

fem::Vec macro_cell_average(const Mesh& macro_mesh, const fem::DofMap& map,
                            const fem::Vec& field, int k) {
  const int m = macro_mesh.cells_per_side[0];
  if (m % k != 0)
    throw std::invalid_argument("macro resolution must be a multiple of 1/eps for comparison");
  const int per = m / k;
  const int kz = macro_mesh.dim == 3 ? k : 1;
  fem::Vec sum = fem::Vec::Zero(static_cast<long>(k) * k * kz);
  const double vol = std::pow(macro_mesh.h, macro_mesh.dim);
  const double cellvol = std::pow(1.0 / k, macro_mesh.dim);
  int nodes[8];
  int ijk[3];
  for (int c = 0; c < macro_mesh.num_cells(); ++c) {
    macro_mesh.cell_coords(c, ijk);
    long mc = (ijk[0] / per) +
              static_cast<long>(k) * ((ijk[1] / per) + static_cast<long>(k) * (ijk[2] / per));
    macro_mesh.cell_nodes(c, nodes);
    double avg = 0.0;
    for (int a = 0; a < macro_mesh.corners_per_cell(); ++a) {
      int d = map.dof_B[nodes[a]];
      if (d >= 0) avg += field[d];
    }
    avg /= macro_mesh.corners_per_cell();
    sum[mc] += vol * avg;
  }
  return sum / cellvol;
}

std::vector<ConvergenceRow> cmd_converge(const SimConfig& cfg, const HarnessOptions& opts) {
  const auto& ks = cfg.eps_denominators;
  if (ks.size() < 3) throw ConfigError({"converge: need at least 3 eps values"});
  for (std::size_t i = 1; i < ks.size(); ++i)
    if (ks[i] != 2 * ks[i - 1])
      throw ConfigError({"converge: eps list must halve at every step"});
  for (int k : ks)
    if (cfg.macro_resolution % k != 0)
      throw ConfigError({"converge: numerics.macro_resolution must be a multiple of every 1/eps"});
  if (cfg.dt > 1.0 / (2.0 * cfg.make_ionic().C_I))
    throw ConfigError({"numerics.dt: exceeds the ionic stability bound dt <= 1/(2 C_I)"});

  const std::string out_dir = resolve_out_dir(cfg, opts);
  const int dim = cfg.cell_spec.dim;
  CellGeometry cell = build_unit_cell(cfg.cell_spec);
  Coefficients coeffs = cfg.make_coefficients(cell.mesh);

  // one macro reference run
  auto tensors = compute_or_load_tensors(cfg, opts);
  const bool tri = macro_regime(cfg.iface) == MacroSolver::Regime::tridomain;
  MacroSolver macro(dim, cfg.macro_resolution, tensors.tensors, cfg.iface, cfg.make_ionic(),
                    cfg.make_macro_data(dim), macro_regime(cfg.iface), cfg.cell_spec.topology);
  MacroTrajectory mtraj = macro.run(cfg.dt, cfg.sample_times);

  double ud_resid = 0.0;
  if (tri && cfg.cell_spec.topology == Topology::disconnected) {
    // Remark-style closed form: u_D = u_B - s1bar e^{-beta t / alpha}
    auto s1bar = cfg.make_macro_data(dim).s1bar;
    double x[3];
    for (std::size_t s = 0; s < mtraj.times.size(); ++s) {
      double decay = std::exp(-cfg.iface.beta * mtraj.times[s] / cfg.iface.alpha);
      for (int nid = 0; nid < macro.mesh().num_nodes(); ++nid) {
        int d = macro.map().dof_B[nid];
        if (d < 0) continue;
        macro.mesh().node_position(nid, x);
        double closed = mtraj.uB[s][d] - s1bar(x) * decay;
        ud_resid = std::max(ud_resid, std::abs(mtraj.uD[s][d] - closed));
      }
    }
  }

  struct MemberResult {
    std::vector<fem::Vec> v_avg, u_avg;
    double jump_sq_time = 0.0;
    double energy_const = 0.0;
    std::string error;
  };
  std::vector<MemberResult> members(ks.size());

  auto run_member = [&](std::size_t idx) {
    try {
      DomainGeometry dom = tile_domain(cell, ks[idx]);
      MicroSolver solver(dom, coeffs, cfg.iface, cfg.make_ionic(), cfg.make_micro_data(dim));
      auto [traj, energy] = solver.run(cfg.dt, cfg.sample_times);
      MemberResult r;
      for (std::size_t s = 0; s < traj.times.size(); ++s) {
        r.v_avg.push_back(
            local_cell_average(dom, solver.v_map(), traj.v[s], AverageMode::out_normalized));
        r.u_avg.push_back(
            local_cell_average(dom, solver.u_map(), traj.u[s], AverageMode::full_cell));
      }
      r.jump_sq_time = energy.jump_sq_time_raw;
      r.energy_const = energy.constant();
      members[idx] = std::move(r);
    } catch (const std::exception& e) {
      members[idx].error = e.what();
    }
  };

  if (opts.threads > 1) {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < ks.size(); ++i) pool.emplace_back(run_member, i);
    for (auto& t : pool) t.join();
  } else {
    for (std::size_t i = 0; i < ks.size(); ++i) run_member(i);
  }
  for (const auto& r : members)
    if (!r.error.empty()) throw std::runtime_error("converge: member failed: " + r.error);

  // macro reference on each member's eps grid
  const double wt = cfg.T / double(cfg.sample_times.size());
  std::vector<ConvergenceRow> rows(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const int k = ks[i];
    const double eps = 1.0 / k;
    ConvergenceRow& row = rows[i];
    row.eps = eps;
    double v_sq = 0.0, u_sq = 0.0;
    for (std::size_t s = 0; s < members[i].v_avg.size(); ++s) {
      fem::Vec mv = macro_cell_average(macro.mesh(), macro.map(), mtraj.v[s], k);
      // the weak limit of u_eps over the whole cell mixes the phase traces
      fem::Vec uref = tri ? fem::Vec(tensors.tensors.vol_out * mtraj.uB[s] +
                                     tensors.tensors.vol_int * mtraj.uD[s])
                          : mtraj.u[s];
      fem::Vec mu = macro_cell_average(macro.mesh(), macro.map(), uref, k);
      const double cellvol = std::pow(eps, dim);
      v_sq += wt * cellvol * (members[i].v_avg[s] - mv).squaredNorm();
      u_sq += wt * cellvol * (members[i].u_avg[s] - mu).squaredNorm();
    }
    row.err_v = std::sqrt(v_sq);
    row.err_u = std::sqrt(u_sq);
    double jump_norm = std::sqrt(members[i].jump_sq_time);
    row.jump_energy = std::pow(eps, -cfg.iface.ell / 2.0) * jump_norm;
    row.jump_diag = std::pow(eps, -(1.0 + cfg.iface.ell) / 2.0) * jump_norm;
    row.jump_unfolded = std::sqrt(eps) * jump_norm;
    row.energy_const = members[i].energy_const;
    row.ud_formula_resid = ud_resid;
    if (i > 0) {
      row.rate_v = std::log2(rows[i - 1].err_v / row.err_v);
      row.rate_u = std::log2(rows[i - 1].err_u / row.err_u);
      row.rate_jump = std::log2(rows[i - 1].jump_diag / row.jump_diag);
    }
  }

  // table and log-log plot
  std::vector<std::vector<std::string>> table;
  table.push_back({"eps", "err_v", "err_u", "jump_energy", "jump_diag", "jump_unfolded",
                   "energy_const", "rate_v", "rate_u", "rate_jump", "ud_formula_resid"});
  for (const auto& r : rows)
    table.push_back({fmt(r.eps), fmt(r.err_v), fmt(r.err_u), fmt(r.jump_energy),
                     fmt(r.jump_diag), fmt(r.jump_unfolded), fmt(r.energy_const), fmt(r.rate_v),
                     fmt(r.rate_u), fmt(r.rate_jump), fmt(r.ud_formula_resid)});
  write_csv(table, (fs::path(out_dir) / "converge.csv").string());

  SvgSeries sv{"err_v", {}}, su{"err_u", {}}, sj{"jump_diag", {}};
  for (const auto& r : rows) {
    sv.points.emplace_back(r.eps, r.err_v);
    su.points.emplace_back(r.eps, r.err_u);
    if (cfg.iface.ell > -1.0 + 1e-12) sj.points.emplace_back(r.eps, r.jump_diag);
  }
  std::vector<SvgSeries> series = {sv, su};
  if (!sj.points.empty()) series.push_back(sj);
  write_svg_plot(series, (fs::path(out_dir) / "converge.svg").string(), "eps", "error", true);
  return rows;
}

}  // namespace bidhom
