#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "experiments.hpp"

int main(int argc, char** argv) {
  using namespace memlab::cli;

  CLI::App app{"memlab: memory-kernel approximation and optimization experiments"};
  app.require_subcommand(1);

  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out_dir;
  std::string config_path;

  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--workers", workers, "worker threads")->envname("MEMLAB_WORKERS")->check(CLI::PositiveNumber);
  run->add_option("--out", out_dir, "output directory, overrides the config's 'output'");

  app.add_subcommand("list", "list the available experiments");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("list")) {
    for (const auto& e : catalog()) std::cout << e.name << "\t" << e.analog << "\n";
    return 0;
  }

  memlab::Json resolved;
  try {
    resolved = resolve_config(load_config(config_path));
  } catch (const memlab::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (!out_dir.empty()) resolved["output"] = out_dir;

  try {
    const ExperimentResult res = run_experiment(resolved, workers);
    write_result(resolved["output"].get<std::string>(), resolved, res);
    std::cerr << resolved["experiment"].get<std::string>() << ": " << res.total_cells - res.failed_cells << "/"
              << res.total_cells << " cells ok, output in " << resolved["output"].get<std::string>() << "\n";
    if (res.failed_cells == res.total_cells) return 1;
  } catch (const memlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
