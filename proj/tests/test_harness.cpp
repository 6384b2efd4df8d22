#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bidhom/cache.hpp"
#include "bidhom/config.hpp"
#include "bidhom/expr.hpp"
#include "bidhom/harness.hpp"
#include "bidhom/report.hpp"

using namespace bidhom;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimalConfig = R"json({
  "geometry": {"dim": 2, "resolution": 8},
  "data": {"ionic_current": "off"}
})json";

const char* kMicroConfig = R"json({
  "geometry": {"dim": 2, "resolution": 4, "eps_list": [4], "inclusion": {"type": "box", "lo": [0.25, 0.25], "hi": [0.75, 0.75]}},
  "coefficients": {"sigma_int": 1.0, "sigma_out": 1.0, "sigma_dis": 2.0, "c0": 0.5, "c0_tilde": 3.0},
  "interface": {"alpha": 1.0, "beta": 1.0, "ell": 1.0},
  "data": {"f1": "sin(pi*x1)*sin(pi*x2)*(1+t)", "v0": "sin(pi*x1)*sin(pi*x2)", "T": 0.2, "ionic_current": "off"},
  "numerics": {"dt": 0.05, "kernel_steps": 10},
  "output": {"sample_times": [0.1, 0.2]}
})json";

SimConfig micro_config() { return parse_config_text(kMicroConfig); }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bidhom_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter() {
    static int c = 0;
    return c++;
  }
};

}  // namespace

TEST_CASE("expr: grammar, variables, precedence") {
  auto e = Expr::parse("1 + 2*x1 - x2/4", {"x1", "x2"});
  double v[2] = {3.0, 8.0};
  CHECK(e.eval(v) == doctest::Approx(1 + 6 - 2).epsilon(1e-15));
  auto t = Expr::parse("sin(pi*x1)*exp(-t) + cos(0)", {"x1", "t"});
  double w[2] = {0.5, 1.0};
  CHECK(t.eval(w) == doctest::Approx(std::exp(-1.0) + 1.0).epsilon(1e-14));
  auto nested = Expr::parse("-(-x1)", {"x1"});
  double z[1] = {2.5};
  CHECK(nested.eval(z) == 2.5);
  CHECK_THROWS(Expr::parse("x1 +", {"x1"}));
  CHECK_THROWS(Expr::parse("foo(3)", {"x1"}));
  CHECK_THROWS(Expr::parse("x3", {"x1", "x2"}));
  CHECK_THROWS(Expr::parse("(1+2", {"x1"}));
}

TEST_CASE("config: minimal file populates documented defaults") {
  SimConfig cfg = parse_config_text(kMinimalConfig);
  CHECK(cfg.cell_spec.dim == 2);
  CHECK(cfg.cell_spec.resolution == 8);
  CHECK(cfg.cell_spec.topology == Topology::disconnected);
  CHECK(cfg.cell_spec.inclusion.kind == InclusionShape::Kind::box);
  CHECK(cfg.iface.alpha == 1.0);
  CHECK(cfg.iface.ell == 1.0);
  CHECK(cfg.eps_denominators == std::vector<int>{4});
  CHECK(cfg.macro_resolution == 32);
  CHECK(cfg.kernel_dt() == doctest::Approx(0.1));  // alpha/(10 beta)
  CHECK(cfg.kernel_steps == 80);                   // horizon 8 alpha/beta
  CHECK(cfg.sample_times == std::vector<double>{1.0});
}

TEST_CASE("config: every schema violation is reported, not just the first") {
  const char* bad = R"json({
    "geometry": {"dim": 5, "resolution": 7, "unknown_key": 1},
    "interface": {"ell": -2.0},
    "data": {"f1": "sin(", "ionic_current": "on"}
  })json";
  try {
    parse_config_text(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.errors.size() >= 5);
    bool has_ell = false, has_unknown = false, has_expr = false, has_ionic = false;
    for (const auto& msg : e.errors) {
      if (msg.find("ell >= -1 required") != std::string::npos) has_ell = true;
      if (msg.find("unknown key") != std::string::npos) has_unknown = true;
      if (msg.find("data.f1") != std::string::npos) has_expr = true;
      if (msg.find("ionic") != std::string::npos && msg.find("required") != std::string::npos)
        has_ionic = true;
    }
    CHECK(has_ell);
    CHECK(has_unknown);
    CHECK(has_expr);
    CHECK(has_ionic);
  }
}

TEST_CASE("config: missing ionic block with the current referenced") {
  const char* bad = R"json({"geometry": {"dim": 2, "resolution": 8}})json";
  CHECK_THROWS_AS(parse_config_text(bad), ConfigError);
}

TEST_CASE("config: canonical round-trip") {
  SimConfig cfg = micro_config();
  std::string canon = cfg.canonical();
  SimConfig cfg2 = parse_config_text(canon);
  CHECK(cfg2.canonical() == canon);
  CHECK(cfg2.tensor_key_material() == cfg.tensor_key_material());
}

TEST_CASE("cache: round trip is bit identical, stale and corrupt are ignored") {
  TempDir tmp;
  TensorCache cache(tmp.path.string());
  EffectiveTensors t;
  t.dim = 2;
  t.A1 = Mat(2, 2);
  t.A1 << 1.0 / 3.0, 0.1234567890123456789, -2e-17, 4.9;
  t.A2 = Mat(2, 2);
  t.A2 << 2, 0, 0, 2;
  t.A2_B = Mat(0, 0);
  t.A2_D = Mat(0, 0);
  t.dt_kernel = 0.1;
  t.K = 2;
  t.B = {Mat::Identity(2, 2) * -0.5, Mat::Identity(2, 2) * -0.25, Mat::Identity(2, 2) * -0.125};
  t.key_hash = 42;
  cache.store(7, t);

  auto back = cache.load(7);
  REQUIRE(back.has_value());
  CHECK(TensorCache::serialize(*back) == TensorCache::serialize(t));
  CHECK(back->A1(0, 1) == t.A1(0, 1));  // 17 significant digits round-trip doubles
  CHECK(back->B.size() == 3);

  SUBCASE("corrupt entry") {
    std::ofstream(cache.entry_path(7), std::ios::binary) << "garbage";
    bool corrupt = false;
    CHECK(!cache.load(7, &corrupt).has_value());
    CHECK(corrupt);
  }
  SUBCASE("stale version") {
    std::string text = TensorCache::serialize(t);
    text.replace(0, text.find('\n'), "bidhom-0");
    std::ofstream(cache.entry_path(7), std::ios::binary) << text;
    CHECK(!cache.load(7).has_value());
  }
  SUBCASE("missing entry") { CHECK(!cache.load(999).has_value()); }
}

TEST_CASE("csv: quoting and determinism") {
  TempDir tmp;
  std::string path = (tmp.path / "x.csv").string();
  std::vector<std::vector<std::string>> rows = {
      {"a", "b,c", "d\"e"}, {"1", "2", "3"}};
  write_csv(rows, path);
  std::string first = slurp(path);
  CHECK(first == "a,\"b,c\",\"d\"\"e\"\n1,2,3\n");
  write_csv(rows, path);
  CHECK(slurp(path) == first);
}

TEST_CASE("svg: empty series yields valid axes-only file; output deterministic") {
  TempDir tmp;
  std::string path = (tmp.path / "p.svg").string();
  write_svg_plot({}, path, "eps", "err", true);
  std::string content = slurp(path);
  CHECK(content.find("<svg") != std::string::npos);
  CHECK(content.find("</svg>") != std::string::npos);
  CHECK(content.find("polyline") == std::string::npos);

  SvgSeries s{"err", {{0.25, 0.1}, {0.125, 0.05}, {0.0625, 0.026}}};
  write_svg_plot({s}, path, "eps", "err", true);
  std::string a = slurp(path);
  write_svg_plot({s}, path, "eps", "err", true);
  CHECK(slurp(path) == a);
  CHECK(a.find("polyline") != std::string::npos);
}

TEST_CASE("harness: tensor cache hit on the second invocation") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;

  auto r1 = compute_or_load_tensors(cfg, opts);
  CHECK(!r1.cache_hit);
  auto r2 = compute_or_load_tensors(cfg, opts);
  CHECK(r2.cache_hit);
  CHECK(log.str().find("cache hit") != std::string::npos);
  CHECK(TensorCache::serialize(r1.tensors) == TensorCache::serialize(r2.tensors));

  SUBCASE("changed coefficient misses") {
    SimConfig cfg2 = cfg;
    cfg2.sigma_dis.value = 3.0;
    auto r3 = compute_or_load_tensors(cfg2, opts);
    CHECK(!r3.cache_hit);
  }
  SUBCASE("corrupted entry recomputed with a warning") {
    TensorCache cache(opts.cache_dir);
    std::uint64_t key = TensorCache::fnv1a(cfg.tensor_key_material());
    std::ofstream(cache.entry_path(key), std::ios::binary) << "junk";
    std::ostringstream log2;
    opts.log = &log2;
    auto r4 = compute_or_load_tensors(cfg, opts);
    CHECK(!r4.cache_hit);
    CHECK(log2.str().find("corrupt") != std::string::npos);
    CHECK(TensorCache::serialize(r4.tensors) == TensorCache::serialize(r1.tensors));
  }
}

TEST_CASE("harness: micro run is byte-deterministic") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  std::ostringstream log;
  HarnessOptions opts;
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;

  opts.out_dir = (tmp.path / "out1").string();
  cmd_run(cfg, opts, "micro");
  opts.out_dir = (tmp.path / "out2").string();
  cmd_run(cfg, opts, "micro");

  for (const char* name : {"micro_t000.csv", "micro_t001.csv"}) {
    std::string a = slurp((tmp.path / "out1" / name).string());
    std::string b = slurp((tmp.path / "out2" / name).string());
    REQUIRE(!a.empty());
    CHECK(a == b);
  }
}

TEST_CASE("harness: macro run auto-computes missing tensors") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.macro_resolution = 8;
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  cmd_run(cfg, opts, "macro");
  CHECK(log.str().find("computed and cached") != std::string::npos);
  CHECK(fs::exists(tmp.path / "out" / "macro_t000.csv"));
  CHECK(fs::exists(tmp.path / "out" / "report.json"));
}

TEST_CASE("harness: kernel dump") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.kernel_steps = 5;
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  cmd_kernel(cfg, opts);
  std::string csv = slurp((tmp.path / "out" / "kernel.csv").string());
  CHECK(csv.find("B11") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + 6 kernel nodes
}

TEST_CASE("harness: converge validates the eps list") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  SUBCASE("too few members") {
    cfg.eps_denominators = {4, 8};
    CHECK_THROWS_AS(cmd_converge(cfg, opts), ConfigError);
  }
  SUBCASE("non-halving list") {
    cfg.eps_denominators = {4, 8, 12};
    CHECK_THROWS_AS(cmd_converge(cfg, opts), ConfigError);
  }
  SUBCASE("macro grid not aligned") {
    cfg.eps_denominators = {4, 8, 16};
    cfg.macro_resolution = 24;
    CHECK_THROWS_AS(cmd_converge(cfg, opts), ConfigError);
  }
}

TEST_CASE("harness: micro dt stability precondition is a config error") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.ionic.present = true;
  cfg.ionic_current_on = true;
  cfg.dt = 0.5;  // C_I = 2 -> bound 0.25
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  CHECK_THROWS_AS(cmd_run(cfg, opts, "micro"), ConfigError);
}

TEST_CASE("harness: constant interface datum produces the cell-flux table") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.s1_expr = "1";
  cfg.kernel_steps = 5;
  cfg = parse_config_text(cfg.canonical());
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  auto r = compute_or_load_tensors(cfg, opts);
  REQUIRE(r.tensors.F_cellflux.size() == 6);  // K + 1 nodes
  for (const auto& f : r.tensors.F_cellflux) CHECK(f.size() == 2);
  // the datum enters the cache key
  SimConfig cfg2 = micro_config();
  cfg2.kernel_steps = 5;
  CHECK(TensorCache::fnv1a(cfg2.tensor_key_material()) !=
        TensorCache::fnv1a(cfg.tensor_key_material()));
}

TEST_CASE("harness: zero-data config writes all-zero trajectories") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.f1_expr = "0";
  cfg.f2_expr = "0";
  cfg.v0_expr = "0";
  cfg = parse_config_text(cfg.canonical());
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  cmd_run(cfg, opts, "micro");
  std::string csv = slurp((tmp.path / "out" / "micro_t001.csv").string());
  REQUIRE(!csv.empty());
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string field;
    int col = 0;
    while (std::getline(fields, field, ',')) {
      // columns 4.. are v,u_B,u_D,w,jump; w starts at 0.5, all others zero
      if (col >= 4 && col != 7 && !field.empty())
        CHECK(std::stod(field) == 0.0);
      ++col;
    }
  }
}

TEST_CASE("svg: decreasing series maps to monotone pixel ordinates") {
  TempDir tmp;
  std::string path = (tmp.path / "m.svg").string();
  SvgSeries s{"err", {{0.25, 0.4}, {0.125, 0.2}, {0.0625, 0.05}}};
  write_svg_plot({s}, path, "eps", "err", true);
  std::string svg = slurp(path);
  auto p = svg.find("points=\"");
  REQUIRE(p != std::string::npos);
  std::string pts = svg.substr(p + 8, svg.find('"', p + 8) - p - 8);
  // larger error -> smaller pixel y; the series is stored from large eps to
  // small, so pixel y must increase along the polyline
  std::istringstream ss(pts);
  std::string pair;
  double prev_y = -1e9;
  while (ss >> pair) {
    double y = std::stod(pair.substr(pair.find(',') + 1));
    CHECK(y > prev_y);
    prev_y = y;
  }
}

TEST_CASE("harness: converge runs the standard limit for ell > 1") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.iface.ell = 2.0;
  cfg.eps_denominators = {4, 8, 16};
  cfg.macro_resolution = 16;
  cfg.T = 0.2;
  cfg.dt = 0.02;
  cfg.sample_times = {0.1, 0.2};
  cfg = parse_config_text(cfg.canonical());
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.threads = 3;
  opts.log = &log;
  auto rows = cmd_converge(cfg, opts);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].err_v < rows[0].err_v);  // converging toward the standard limit
  CHECK(fs::exists(tmp.path / "out" / "converge.csv"));
  CHECK(fs::exists(tmp.path / "out" / "converge.svg"));
}

TEST_CASE("harness: kernel dump requires the memory regime") {
  TempDir tmp;
  SimConfig cfg = micro_config();
  cfg.iface.ell = 0.0;
  std::ostringstream log;
  HarnessOptions opts;
  opts.out_dir = (tmp.path / "out").string();
  opts.cache_dir = (tmp.path / "cache").string();
  opts.log = &log;
  CHECK_THROWS_AS(cmd_kernel(cfg, opts), ConfigError);
}
