#include "bidhom/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bidhom {

using nlohmann::json;

ConfigError::ConfigError(std::vector<std::string> errs)
    : std::runtime_error([&errs] {
        std::string msg = "config validation failed:";
        for (const auto& e : errs) msg += "\n  - " + e;
        return msg;
      }()),
      errors(std::move(errs)) {}

fem::MatrixField CoeffSpec::make_field(const Mesh& unit_mesh) const {
  const int dim = unit_mesh.dim;
  switch (kind) {
    case Kind::scalar:
      return fem::MatrixField::scalar(dim, value);
    case Kind::matrix: {
      Mat m(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = matrix[i][j];
      return fem::MatrixField::constant(m);
    }
    case Kind::per_cell: {
      std::vector<Mat> table;
      table.reserve(cells.size());
      for (double c : cells) table.push_back(Mat::Identity(dim, dim) * c);
      return fem::MatrixField::per_cell(std::move(table));
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& path,
                std::vector<std::string>& errors) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) errors.push_back(path + ": unknown key '" + it.key() + "'");
  }
}

double get_num(const json& j, const char* key, double def, const std::string& path,
               std::vector<std::string>& errors) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number()) {
    errors.push_back(path + "." + key + ": expected a number");
    return def;
  }
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int def, const std::string& path,
            std::vector<std::string>& errors) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number_integer()) {
    errors.push_back(path + "." + key + ": expected an integer");
    return def;
  }
  return j[key].get<int>();
}

std::string get_str(const json& j, const char* key, const std::string& def,
                    const std::string& path, std::vector<std::string>& errors) {
  if (!j.contains(key)) return def;
  if (!j[key].is_string()) {
    errors.push_back(path + "." + key + ": expected a string");
    return def;
  }
  return j[key].get<std::string>();
}

CoeffSpec parse_coeff(const json& j, const std::string& path, std::vector<std::string>& errors) {
  CoeffSpec spec;
  if (j.is_number()) {
    spec.kind = CoeffSpec::Kind::scalar;
    spec.value = j.get<double>();
    return spec;
  }
  if (j.is_array()) {
    spec.kind = CoeffSpec::Kind::matrix;
    for (const auto& row : j) {
      std::vector<double> r;
      if (!row.is_array()) {
        errors.push_back(path + ": matrix rows must be arrays");
        return spec;
      }
      for (const auto& vij : row) {
        if (!vij.is_number()) {
          errors.push_back(path + ": matrix entries must be numbers");
          return spec;
        }
        r.push_back(vij.get<double>());
      }
      spec.matrix.push_back(std::move(r));
    }
    return spec;
  }
  if (j.is_object()) {
    check_keys(j, {"per_cell"}, path, errors);
    if (j.contains("per_cell") && j["per_cell"].is_array()) {
      spec.kind = CoeffSpec::Kind::per_cell;
      for (const auto& vi : j["per_cell"]) {
        if (!vi.is_number()) {
          errors.push_back(path + ".per_cell: entries must be numbers");
          return spec;
        }
        spec.cells.push_back(vi.get<double>());
      }
      return spec;
    }
    errors.push_back(path + ": object form requires a per_cell array");
    return spec;
  }
  errors.push_back(path + ": expected a number, matrix, or {per_cell: [...]}");
  return spec;
}

std::vector<std::string> space_vars(int dim) {
  std::vector<std::string> v = {"x1", "x2"};
  if (dim == 3) v.push_back("x3");
  return v;
}

std::vector<std::string> spacetime_vars(int dim) {
  auto v = space_vars(dim);
  v.push_back("t");
  return v;
}

void try_parse_expr(const std::string& text, const std::vector<std::string>& vars,
                    const std::string& path, std::vector<std::string>& errors) {
  if (text.empty()) return;
  try {
    Expr::parse(text, vars);
  } catch (const std::exception& e) {
    errors.push_back(path + ": " + e.what());
  }
}

}  // namespace

SimConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({origin + ": " + e.what()});
  }
  std::vector<std::string> errors;
  SimConfig cfg;

  check_keys(root,
             {"geometry", "coefficients", "interface", "ionic", "data", "numerics", "output"},
             "config", errors);

  // geometry
  if (!root.contains("geometry")) {
    errors.push_back("config: missing geometry block");
  } else {
    const json& g = root["geometry"];
    check_keys(g, {"dim", "resolution", "topology", "inclusion", "eps_list"}, "geometry", errors);
    cfg.cell_spec.dim = get_int(g, "dim", 2, "geometry", errors);
    if (cfg.cell_spec.dim != 2 && cfg.cell_spec.dim != 3)
      errors.push_back("geometry.dim: must be 2 or 3");
    cfg.cell_spec.resolution = get_int(g, "resolution", 8, "geometry", errors);
    int n = cfg.cell_spec.resolution;
    if (n < 2 || (n & (n - 1)) != 0)
      errors.push_back("geometry.resolution: must be a power of two >= 2");
    std::string topo = get_str(g, "topology", "disconnected", "geometry", errors);
    if (topo == "disconnected")
      cfg.cell_spec.topology = Topology::disconnected;
    else if (topo == "connected")
      cfg.cell_spec.topology = Topology::connected;
    else
      errors.push_back("geometry.topology: must be 'disconnected' or 'connected'");

    if (g.contains("inclusion")) {
      const json& inc = g["inclusion"];
      check_keys(inc, {"type", "lo", "hi"}, "geometry.inclusion", errors);
      std::string type = get_str(inc, "type", "box", "geometry.inclusion", errors);
      if (type == "empty")
        cfg.cell_spec.inclusion.kind = InclusionShape::Kind::empty;
      else if (type == "box")
        cfg.cell_spec.inclusion.kind = InclusionShape::Kind::box;
      else if (type == "tube_cross")
        cfg.cell_spec.inclusion.kind = InclusionShape::Kind::tube_cross;
      else
        errors.push_back("geometry.inclusion.type: must be empty, box, or tube_cross");
      auto read_corner = [&](const char* key, std::array<double, 3>& dst, double def) {
        dst = {def, def, def};
        if (!inc.contains(key)) return;
        if (!inc[key].is_array()) {
          errors.push_back(std::string("geometry.inclusion.") + key + ": expected an array");
          return;
        }
        int i = 0;
        for (const auto& v : inc[key]) {
          if (i < 3 && v.is_number()) dst[i] = v.get<double>();
          ++i;
        }
      };
      read_corner("lo", cfg.cell_spec.inclusion.lo, 0.25);
      read_corner("hi", cfg.cell_spec.inclusion.hi, 0.75);
    } else {
      cfg.cell_spec.inclusion.kind = InclusionShape::Kind::box;
      cfg.cell_spec.inclusion.lo = {0.25, 0.25, 0.25};
      cfg.cell_spec.inclusion.hi = {0.75, 0.75, 0.75};
    }

    if (g.contains("eps_list")) {
      if (!g["eps_list"].is_array()) {
        errors.push_back("geometry.eps_list: expected an array");
      } else {
        for (const auto& v : g["eps_list"]) {
          if (!v.is_number()) {
            errors.push_back("geometry.eps_list: entries must be numbers");
            continue;
          }
          double x = v.get<double>();
          double k = x >= 1.0 ? x : 1.0 / x;
          if (std::abs(k - std::round(k)) > 1e-9)
            errors.push_back("geometry.eps_list: 1/eps must be an integer");
          else
            cfg.eps_denominators.push_back(static_cast<int>(std::round(k)));
        }
      }
    }
    if (cfg.eps_denominators.empty()) cfg.eps_denominators = {4};
  }

  // coefficients
  if (root.contains("coefficients")) {
    const json& c = root["coefficients"];
    check_keys(c, {"sigma_int", "sigma_out", "sigma_dis", "c0", "c0_tilde"}, "coefficients",
               errors);
    if (c.contains("sigma_int"))
      cfg.sigma_int = parse_coeff(c["sigma_int"], "coefficients.sigma_int", errors);
    if (c.contains("sigma_out"))
      cfg.sigma_out = parse_coeff(c["sigma_out"], "coefficients.sigma_out", errors);
    if (c.contains("sigma_dis"))
      cfg.sigma_dis = parse_coeff(c["sigma_dis"], "coefficients.sigma_dis", errors);
    cfg.c0 = get_num(c, "c0", 0.1, "coefficients", errors);
    cfg.c0_tilde = get_num(c, "c0_tilde", 100.0, "coefficients", errors);
  }

  // interface
  if (root.contains("interface")) {
    const json& ifc = root["interface"];
    check_keys(ifc, {"alpha", "beta", "ell"}, "interface", errors);
    cfg.iface.alpha = get_num(ifc, "alpha", 1.0, "interface", errors);
    cfg.iface.beta = get_num(ifc, "beta", 1.0, "interface", errors);
    cfg.iface.ell = get_num(ifc, "ell", 1.0, "interface", errors);
  }
  if (cfg.iface.ell < -1.0 - 1e-12)
    errors.push_back("interface.ell: ell >= -1 required (got " + std::to_string(cfg.iface.ell) +
                     ")");
  if (!(cfg.iface.alpha > 0.0) || !(cfg.iface.beta > 0.0))
    errors.push_back("interface: alpha and beta must be strictly positive");

  // ionic
  if (root.contains("ionic")) {
    cfg.ionic.present = true;
    const json& io = root["ionic"];
    check_keys(io,
               {"variant", "a", "b", "h1", "h2", "lipschitz_a", "lipschitz_b", "lipschitz_h1",
                "lipschitz_h2", "tau_in", "tau_out", "tau_open", "tau_close", "p_th", "p_gate",
                "r_max", "C_I"},
               "ionic", errors);
    cfg.ionic.variant = get_str(io, "variant", "affine_hh", "ionic", errors);
    if (cfg.ionic.variant != "affine_hh" && cfg.ionic.variant != "mitchell_schaeffer")
      errors.push_back("ionic.variant: must be affine_hh or mitchell_schaeffer");
    cfg.ionic.a = get_str(io, "a", cfg.ionic.a, "ionic", errors);
    cfg.ionic.b = get_str(io, "b", cfg.ionic.b, "ionic", errors);
    cfg.ionic.h1 = get_str(io, "h1", cfg.ionic.h1, "ionic", errors);
    cfg.ionic.h2 = get_str(io, "h2", cfg.ionic.h2, "ionic", errors);
    cfg.ionic.lip_a = get_num(io, "lipschitz_a", cfg.ionic.lip_a, "ionic", errors);
    cfg.ionic.lip_b = get_num(io, "lipschitz_b", cfg.ionic.lip_b, "ionic", errors);
    cfg.ionic.lip_h1 = get_num(io, "lipschitz_h1", cfg.ionic.lip_h1, "ionic", errors);
    cfg.ionic.lip_h2 = get_num(io, "lipschitz_h2", cfg.ionic.lip_h2, "ionic", errors);
    cfg.ionic.tau_in = get_num(io, "tau_in", cfg.ionic.tau_in, "ionic", errors);
    cfg.ionic.tau_out = get_num(io, "tau_out", cfg.ionic.tau_out, "ionic", errors);
    cfg.ionic.tau_open = get_num(io, "tau_open", cfg.ionic.tau_open, "ionic", errors);
    cfg.ionic.tau_close = get_num(io, "tau_close", cfg.ionic.tau_close, "ionic", errors);
    cfg.ionic.p_th = get_num(io, "p_th", cfg.ionic.p_th, "ionic", errors);
    cfg.ionic.p_gate = get_num(io, "p_gate", cfg.ionic.p_gate, "ionic", errors);
    cfg.ionic.r_max = get_num(io, "r_max", cfg.ionic.r_max, "ionic", errors);
    cfg.ionic.C_I = get_num(io, "C_I", cfg.ionic.C_I, "ionic", errors);
    for (const char* ename : {"a", "b", "h1", "h2"}) {
      const std::string& ex = ename == std::string("a")   ? cfg.ionic.a
                              : ename == std::string("b") ? cfg.ionic.b
                              : ename == std::string("h1") ? cfg.ionic.h1
                                                           : cfg.ionic.h2;
      try_parse_expr(ex, {"p"}, std::string("ionic.") + ename, errors);
    }
  }

  // data
  const int dim = cfg.cell_spec.dim;
  if (root.contains("data")) {
    const json& d = root["data"];
    check_keys(d, {"f1", "f2", "v0", "w_in", "s0", "s1", "s1bar", "T", "ionic_current"}, "data",
               errors);
    cfg.f1_expr = get_str(d, "f1", cfg.f1_expr, "data", errors);
    cfg.f2_expr = get_str(d, "f2", cfg.f2_expr, "data", errors);
    cfg.v0_expr = get_str(d, "v0", cfg.v0_expr, "data", errors);
    cfg.w_in_expr = get_str(d, "w_in", cfg.w_in_expr, "data", errors);
    cfg.s1_expr = get_str(d, "s1", cfg.s1_expr, "data", errors);
    cfg.s1bar_expr = get_str(d, "s1bar", cfg.s1bar_expr, "data", errors);
    cfg.T = get_num(d, "T", cfg.T, "data", errors);
    std::string ion = get_str(d, "ionic_current", "on", "data", errors);
    if (ion == "on")
      cfg.ionic_current_on = true;
    else if (ion == "off")
      cfg.ionic_current_on = false;
    else
      errors.push_back("data.ionic_current: must be 'on' or 'off'");
    if (d.contains("s0")) {
      const json& s0 = d["s0"];
      check_keys(s0, {"kind", "value", "bound"}, "data.s0", errors);
      cfg.s0_kind = get_str(s0, "kind", "zero", "data.s0", errors);
      if (cfg.s0_kind != "zero" && cfg.s0_kind != "scaled_constant")
        errors.push_back("data.s0.kind: must be 'zero' or 'scaled_constant'");
      cfg.s0_value = get_num(s0, "value", 0.0, "data.s0", errors);
      cfg.s0_bound = get_num(s0, "bound", cfg.s0_bound, "data.s0", errors);
    }
  }
  if (!(cfg.T > 0)) errors.push_back("data.T: must be positive");
  try_parse_expr(cfg.f1_expr, spacetime_vars(dim), "data.f1", errors);
  try_parse_expr(cfg.f2_expr, spacetime_vars(dim), "data.f2", errors);
  try_parse_expr(cfg.v0_expr, space_vars(dim), "data.v0", errors);
  try_parse_expr(cfg.w_in_expr, space_vars(dim), "data.w_in", errors);
  try_parse_expr(cfg.s1bar_expr, space_vars(dim), "data.s1bar", errors);
  {
    std::vector<std::string> yvars = {"y1", "y2"};
    if (dim == 3) yvars.push_back("y3");
    try_parse_expr(cfg.s1_expr, yvars, "data.s1", errors);
  }
  if (cfg.ionic_current_on && !cfg.ionic.present)
    errors.push_back(
        "ionic: block is required when data.ionic_current is 'on' (set it to 'off' to run "
        "without an ionic current)");

  // numerics
  if (root.contains("numerics")) {
    const json& nu = root["numerics"];
    check_keys(nu, {"macro_resolution", "dt", "dt_kernel", "kernel_steps", "solver_tol"},
               "numerics", errors);
    cfg.macro_resolution = get_int(nu, "macro_resolution", cfg.macro_resolution, "numerics",
                                   errors);
    cfg.dt = get_num(nu, "dt", cfg.dt, "numerics", errors);
    cfg.dt_kernel = get_num(nu, "dt_kernel", cfg.dt_kernel, "numerics", errors);
    cfg.kernel_steps = get_int(nu, "kernel_steps", cfg.kernel_steps, "numerics", errors);
    cfg.solver_tol = get_num(nu, "solver_tol", cfg.solver_tol, "numerics", errors);
  }
  if (!(cfg.dt > 0)) errors.push_back("numerics.dt: must be positive");
  if (cfg.macro_resolution < 2) errors.push_back("numerics.macro_resolution: must be >= 2");
  if (cfg.kernel_steps < 0) errors.push_back("numerics.kernel_steps: must be >= 0");

  // output
  if (root.contains("output")) {
    const json& o = root["output"];
    check_keys(o, {"directory", "sample_times"}, "output", errors);
    cfg.out_dir = get_str(o, "directory", cfg.out_dir, "output", errors);
    if (o.contains("sample_times")) {
      if (!o["sample_times"].is_array())
        errors.push_back("output.sample_times: expected an array");
      else
        for (const auto& v : o["sample_times"]) {
          if (v.is_number())
            cfg.sample_times.push_back(v.get<double>());
          else
            errors.push_back("output.sample_times: entries must be numbers");
        }
    }
  }
  if (cfg.sample_times.empty()) cfg.sample_times = {cfg.T};
  for (double s : cfg.sample_times)
    if (s < 0 || s > cfg.T + 1e-12)
      errors.push_back("output.sample_times: must lie in [0, T]");

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot open config file"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

Coefficients SimConfig::make_coefficients(const Mesh& unit_mesh) const {
  Coefficients co;
  co.sigma_int = sigma_int.make_field(unit_mesh);
  co.sigma_out = sigma_out.make_field(unit_mesh);
  co.sigma_dis = sigma_dis.make_field(unit_mesh);
  co.c0 = c0;
  co.c0_tilde = c0_tilde;
  return co;
}

IonicModel SimConfig::make_ionic() const {
  if (!ionic_current_on) return IonicModel::zero_current();
  IonicModel m;
  if (ionic.variant == "mitchell_schaeffer") {
    m = IonicModel::default_mitchell_schaeffer();
    m.tau_in = ionic.tau_in;
    m.tau_out = ionic.tau_out;
    m.tau_open = ionic.tau_open;
    m.tau_close = ionic.tau_close;
    m.p_th = ionic.p_th;
    m.p_gate = ionic.p_gate;
    m.r_max = ionic.r_max;
  } else {
    m.variant = IonicModel::Variant::affine_hh;
    auto wrap = [](const std::string& text) {
      Expr e = Expr::parse(text, {"p"});
      return [e](double p) { return e.eval(&p); };
    };
    m.a = wrap(ionic.a);
    m.b = wrap(ionic.b);
    m.h1 = wrap(ionic.h1);
    m.h2 = wrap(ionic.h2);
    m.lip_a = ionic.lip_a;
    m.lip_b = ionic.lip_b;
    m.lip_h1 = ionic.lip_h1;
    m.lip_h2 = ionic.lip_h2;
  }
  m.C_I = ionic.C_I;
  return m;
}

namespace {

SpaceTimeFn wrap_spacetime(const std::string& text, int dim) {
  Expr e = Expr::parse(text, dim == 3 ? std::vector<std::string>{"x1", "x2", "x3", "t"}
                                      : std::vector<std::string>{"x1", "x2", "t"});
  return [e, dim](const double* x, double t) {
    double vars[4] = {x[0], x[1], dim == 3 ? x[2] : t, t};
    if (dim == 3) vars[3] = t;
    return e.eval(vars);
  };
}

SpaceFn wrap_space(const std::string& text, int dim) {
  Expr e = Expr::parse(text, dim == 3 ? std::vector<std::string>{"x1", "x2", "x3"}
                                      : std::vector<std::string>{"x1", "x2"});
  return [e](const double* x) { return e.eval(x); };
}

}  // namespace

ProblemData SimConfig::make_micro_data(int dim) const {
  ProblemData d;
  d.f1 = wrap_spacetime(f1_expr, dim);
  d.f2 = wrap_spacetime(f2_expr, dim);
  d.v0 = wrap_space(v0_expr, dim);
  d.w_in = wrap_space(w_in_expr, dim);
  d.s0_kind = s0_kind == "scaled_constant" ? ProblemData::S0Kind::scaled_constant
                                           : ProblemData::S0Kind::zero;
  d.s0_value = s0_value;
  d.s0_bound = s0_bound;
  d.T = T;
  return d;
}

MacroData SimConfig::make_macro_data(int dim) const {
  MacroData d;
  d.f1 = wrap_spacetime(f1_expr, dim);
  d.f2 = wrap_spacetime(f2_expr, dim);
  d.v0 = wrap_space(v0_expr, dim);
  d.w_in = wrap_space(w_in_expr, dim);
  if (!s1bar_expr.empty()) d.s1bar = wrap_space(s1bar_expr, dim);
  d.T = T;
  return d;
}

std::optional<std::vector<double>> SimConfig::make_s1_facet(const CellGeometry& cell) const {
  if (s1_expr.empty()) return std::nullopt;
  std::vector<std::string> yvars = {"y1", "y2"};
  if (cell.mesh.dim == 3) yvars.push_back("y3");
  Expr e = Expr::parse(s1_expr, yvars);
  std::vector<double> values;
  values.reserve(cell.mesh.facets.size());
  for (const Facet& f : cell.mesh.facets) {
    int ijk[3];
    cell.mesh.cell_coords(f.cell_int, ijk);
    double y[3];
    for (int d = 0; d < 3; ++d) y[d] = (ijk[d] + 0.5) * cell.mesh.h;
    y[f.axis] += f.sign * cell.mesh.h / 2.0;  // face center of the int cell
    values.push_back(e.eval(y));
  }
  return values;
}

namespace {

json coeff_to_json(const CoeffSpec& c) {
  switch (c.kind) {
    case CoeffSpec::Kind::scalar:
      return c.value;
    case CoeffSpec::Kind::matrix:
      return c.matrix;
    case CoeffSpec::Kind::per_cell:
      return json{{"per_cell", c.cells}};
  }
  return json();
}

json config_to_json(const SimConfig& c) {
  json g;
  g["dim"] = c.cell_spec.dim;
  g["resolution"] = c.cell_spec.resolution;
  g["topology"] = c.cell_spec.topology == Topology::connected ? "connected" : "disconnected";
  json inc;
  switch (c.cell_spec.inclusion.kind) {
    case InclusionShape::Kind::empty:
      inc["type"] = "empty";
      break;
    case InclusionShape::Kind::box:
      inc["type"] = "box";
      break;
    case InclusionShape::Kind::tube_cross:
      inc["type"] = "tube_cross";
      break;
  }
  inc["lo"] = std::vector<double>(c.cell_spec.inclusion.lo.begin(),
                                  c.cell_spec.inclusion.lo.begin() + c.cell_spec.dim);
  inc["hi"] = std::vector<double>(c.cell_spec.inclusion.hi.begin(),
                                  c.cell_spec.inclusion.hi.begin() + c.cell_spec.dim);
  g["inclusion"] = inc;
  g["eps_list"] = c.eps_denominators;

  json co;
  co["sigma_int"] = coeff_to_json(c.sigma_int);
  co["sigma_out"] = coeff_to_json(c.sigma_out);
  co["sigma_dis"] = coeff_to_json(c.sigma_dis);
  co["c0"] = c.c0;
  co["c0_tilde"] = c.c0_tilde;

  json ifc;
  ifc["alpha"] = c.iface.alpha;
  ifc["beta"] = c.iface.beta;
  ifc["ell"] = c.iface.ell;

  json d;
  d["f1"] = c.f1_expr;
  d["f2"] = c.f2_expr;
  d["v0"] = c.v0_expr;
  d["w_in"] = c.w_in_expr;
  if (!c.s1_expr.empty()) d["s1"] = c.s1_expr;
  if (!c.s1bar_expr.empty()) d["s1bar"] = c.s1bar_expr;
  d["s0"] = json{{"kind", c.s0_kind}, {"value", c.s0_value}, {"bound", c.s0_bound}};
  d["T"] = c.T;
  d["ionic_current"] = c.ionic_current_on ? "on" : "off";

  json nu;
  nu["macro_resolution"] = c.macro_resolution;
  nu["dt"] = c.dt;
  nu["dt_kernel"] = c.dt_kernel;
  nu["kernel_steps"] = c.kernel_steps;
  nu["solver_tol"] = c.solver_tol;

  json o;
  o["directory"] = c.out_dir;
  o["sample_times"] = c.sample_times;

  json root;
  root["geometry"] = g;
  root["coefficients"] = co;
  root["interface"] = ifc;
  if (c.ionic.present) {
    json io;
    io["variant"] = c.ionic.variant;
    if (c.ionic.variant == "affine_hh") {
      io["a"] = c.ionic.a;
      io["b"] = c.ionic.b;
      io["h1"] = c.ionic.h1;
      io["h2"] = c.ionic.h2;
      io["lipschitz_a"] = c.ionic.lip_a;
      io["lipschitz_b"] = c.ionic.lip_b;
      io["lipschitz_h1"] = c.ionic.lip_h1;
      io["lipschitz_h2"] = c.ionic.lip_h2;
    } else {
      io["tau_in"] = c.ionic.tau_in;
      io["tau_out"] = c.ionic.tau_out;
      io["tau_open"] = c.ionic.tau_open;
      io["tau_close"] = c.ionic.tau_close;
      io["p_th"] = c.ionic.p_th;
      io["p_gate"] = c.ionic.p_gate;
      io["r_max"] = c.ionic.r_max;
    }
    io["C_I"] = c.ionic.C_I;
    root["ionic"] = io;
  }
  root["data"] = d;
  root["numerics"] = nu;
  root["output"] = o;
  return root;
}

}  // namespace

std::string SimConfig::canonical() const { return config_to_json(*this).dump(2) + "\n"; }

std::string SimConfig::tensor_key_material() const {
  json root = config_to_json(*this);
  json key;
  key["cell"] = root["geometry"];
  key["cell"].erase("eps_list");
  key["coefficients"] = root["coefficients"];
  key["alpha"] = iface.alpha;
  key["beta"] = iface.beta;
  key["ell_regime"] = static_cast<int>(iface.regime());
  key["dt_kernel"] = kernel_dt();
  key["K"] = kernel_steps;
  if (!s1_expr.empty()) key["s1"] = s1_expr;
  return key.dump();
}

}  // namespace bidhom
