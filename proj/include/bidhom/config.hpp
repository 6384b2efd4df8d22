#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bidhom/cell_problems.hpp"
#include "bidhom/expr.hpp"
#include "bidhom/geometry.hpp"
#include "bidhom/ionics.hpp"
#include "bidhom/macro_solver.hpp"
#include "bidhom/micro_solver.hpp"

namespace bidhom {

struct ConfigError : std::runtime_error {
  std::vector<std::string> errors;
  explicit ConfigError(std::vector<std::string> errs);
};

/// One conductivity entry: a scalar, a full matrix, or a per-unit-cell table
/// of scalars.
struct CoeffSpec {
  enum class Kind { scalar, matrix, per_cell };
  Kind kind = Kind::scalar;
  double value = 1.0;
  std::vector<std::vector<double>> matrix;
  std::vector<double> cells;

  fem::MatrixField make_field(const Mesh& unit_mesh) const;
};

struct IonicSpec {
  bool present = false;
  std::string variant = "affine_hh";
  // affine_hh expressions in the variable p, with declared constants
  std::string a = "0.2 + 0.3/(1 + p*p)";
  std::string b = "0.25 + 0.1/(1 + p*p)";
  std::string h1 = "p";
  std::string h2 = "0.5";
  double lip_a = 0.2, lip_b = 0.07, lip_h1 = 1.0, lip_h2 = 0.0;
  // mitchell_schaeffer constants
  double tau_in = 0.3, tau_out = 6.0, tau_open = 120.0, tau_close = 150.0;
  double p_th = 0.13, p_gate = 0.013, r_max = 20.0;
  double C_I = 2.0;
};

struct SimConfig {
  // geometry
  CellSpec cell_spec;
  std::vector<int> eps_denominators;  // k values, eps = 1/k

  // coefficients
  CoeffSpec sigma_int, sigma_out, sigma_dis;
  double c0 = 0.1, c0_tilde = 100.0;

  // interface
  InterfaceParams iface;

  // ionic
  IonicSpec ionic;
  bool ionic_current_on = true;

  // data (expressions: f in x1..xd,t; v0/w_in in x1..xd; s1 in y1..yd; s1bar in x1..xd)
  std::string f1_expr = "0", f2_expr = "0", v0_expr = "0", w_in_expr = "0.5";
  std::string s1_expr, s1bar_expr;
  std::string s0_kind = "zero";
  double s0_value = 0.0, s0_bound = 1e3;
  double T = 1.0;

  // numerics
  int macro_resolution = 32;
  double dt = 0.01;
  double dt_kernel = 0.0;  // 0 -> default alpha/(10 beta)
  int kernel_steps = 80;   // horizon defaults to 8 alpha/beta
  double solver_tol = 1e-10;

  // output
  std::string out_dir = "out";
  std::vector<double> sample_times;

  double kernel_dt() const { return dt_kernel > 0 ? dt_kernel : iface.alpha / (10.0 * iface.beta); }

  Coefficients make_coefficients(const Mesh& unit_mesh) const;
  IonicModel make_ionic() const;
  ProblemData make_micro_data(int dim) const;
  MacroData make_macro_data(int dim) const;
  std::optional<std::vector<double>> make_s1_facet(const CellGeometry& cell) const;

  /// Canonical serialization: normalized JSON with sorted keys; reloading it
  /// reproduces this config.
  std::string canonical() const;
  /// Canonical serialization of the tensor-cache key subset (cell spec,
  /// coefficients, alpha, beta, dt_kernel, K, n).
  std::string tensor_key_material() const;
};

SimConfig load_config(const std::string& path);
SimConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");

}  // namespace bidhom
