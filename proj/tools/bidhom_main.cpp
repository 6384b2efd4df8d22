#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>

#include "bidhom/harness.hpp"
#include "bidhom/report.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bidhom: homogenization toolkit for a bidomain model with dynamic interface "
               "transmission"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, cache_dir, solver = "micro";
  int threads = 1;
  app.add_option("--config", config_path, "configuration file (JSON)")->required();
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--cache", cache_dir, "tensor cache directory");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  auto* tensors = app.add_subcommand("tensors", "solve the cell problems, emit tensors");
  auto* run = app.add_subcommand("run", "run the micro or macro solver");
  run->add_option("--solver", solver, "micro | macro")
      ->check(CLI::IsMember({"micro", "macro"}));
  auto* converge = app.add_subcommand("converge", "micro -> macro eps-convergence experiment");
  auto* kernel = app.add_subcommand("kernel", "dump the memory kernel B(t_k)");

  CLI11_PARSE(app, argc, argv);

  try {
    bidhom::SimConfig cfg = bidhom::load_config(config_path);
    bidhom::HarnessOptions opts;
    opts.out_dir = out_dir;
    opts.cache_dir = cache_dir;
    opts.threads = threads;
    if (tensors->parsed()) bidhom::cmd_tensors(cfg, opts);
    if (run->parsed()) bidhom::cmd_run(cfg, opts, solver);
    if (converge->parsed()) bidhom::cmd_converge(cfg, opts);
    if (kernel->parsed()) bidhom::cmd_kernel(cfg, opts);
    return 0;
  } catch (const bidhom::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const bidhom::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  }
}
