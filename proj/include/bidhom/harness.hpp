#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "bidhom/cache.hpp"
#include "bidhom/config.hpp"
#include "bidhom/macro_solver.hpp"
#include "bidhom/micro_solver.hpp"

namespace bidhom {

struct HarnessOptions {
  std::string out_dir;    // overrides config output.directory when set
  std::string cache_dir;  // --cache flag; else BIDHOM_CACHE_DIR; else <out>/tensor_cache
  int threads = 1;
  std::ostream* log = &std::cout;
};

std::string resolve_out_dir(const SimConfig& cfg, const HarnessOptions& opts);
std::string resolve_cache_dir(const SimConfig& cfg, const HarnessOptions& opts);

struct TensorResult {
  EffectiveTensors tensors;
  bool cache_hit = false;
};

/// Computes the effective tensors for the config's regime, or loads them from
/// the cache on a key hit. Corrupt entries are recomputed and overwritten.
TensorResult compute_or_load_tensors(const SimConfig& cfg, const HarnessOptions& opts);

void cmd_tensors(const SimConfig& cfg, const HarnessOptions& opts);
void cmd_kernel(const SimConfig& cfg, const HarnessOptions& opts);
void cmd_run(const SimConfig& cfg, const HarnessOptions& opts, const std::string& solver);

struct ConvergenceRow {
  double eps = 0;
  double err_v = 0, err_u = 0;
  double jump_energy = 0;   // eps^{-ell/2} ||[u]||_{L2(Gamma_eps,T)} (energy scaling)
  double jump_diag = 0;     // eps^{-(1+ell)/2} ||[u]||_{L2(Gamma_eps,T)}
  double jump_unfolded = 0;  // eps^{1/2} ||[u]||: the boundary-unfolded jump norm
  double energy_const = 0;   // discrete energy left side / (data norms + 1)
  double rate_v = 0, rate_u = 0, rate_jump = 0;
  double ud_formula_resid = 0;  // ell = -1 disconnected closed-form residual
};

std::vector<ConvergenceRow> cmd_converge(const SimConfig& cfg, const HarnessOptions& opts);

/// Per-eps-cell averages of a macro nodal field (requires the macro
/// resolution to be a multiple of k).
fem::Vec macro_cell_average(const Mesh& macro_mesh, const fem::DofMap& map, const fem::Vec& field,
                            int k);

}  // namespace bidhom
