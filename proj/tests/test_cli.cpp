#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "experiments.hpp"

using namespace memlab;
using namespace memlab::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json loss_check() {
  return Json::parse(R"({
    "experiment": "loss-check",
    "kernel": {"kind": "expsum", "coeffs": [2.0], "rates": [2.0]},
    "init": {"a": [1.0], "w": [1.0]}
  })");
}

}  // namespace

TEST_CASE("catalog lists every experiment") {
  CHECK(catalog().size() == 10);
  for (const auto& e : catalog()) CHECK_FALSE(e.analog.empty());
}

TEST_CASE("defaults are filled and echoed") {
  const Json r = resolve_config(loss_check());
  CHECK(r["seed"] == 0);
  CHECK(r["output"] == "out/loss-check");
  CHECK(r["numeric"]["hessian"] == true);
}

TEST_CASE("schema errors name the offending field") {
  Json bad = loss_check();
  bad["kernel"]["rates"] = {-1.0};
  CHECK_THROWS_AS(resolve_config(bad), ConfigError);

  Json unknown = loss_check();
  unknown["colour"] = 1;
  CHECK_THROWS_AS(resolve_config(unknown), ConfigError);

  Json nosuch = loss_check();
  nosuch["experiment"] = "nope";
  CHECK_THROWS_AS(resolve_config(nosuch), ConfigError);

  Json sweep = Json::parse(R"({
    "experiment": "rate-sweep",
    "kernel": {"kind": "expsum", "coeffs": [1.0], "rates": [1.0]},
    "numeric": {"beta": 1.0},
    "sweep": {"m": []}
  })");
  try {
    resolve_config(sweep);
    FAIL("empty axis accepted");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sweep axis is empty") != std::string::npos);
  }
}

TEST_CASE("malformed JSON reports a line") {
  const fs::path p = fs::temp_directory_path() / "memlab_bad.json";
  {
    std::ofstream out(p);
    out << "{\n  \"experiment\": \"flow\",\n  oops\n}\n";
  }
  try {
    load_config(p.string());
    FAIL("parse error not raised");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("kernel json round trip") {
  const MemoryKernel k = CompositeKernel{ExpSumKernel(Vec::Ones(2), (Vec(2) << 1.0, 2.0).finished()), GaussianBump(0.5, 10.0, 1.0)};
  const MemoryKernel back = kernel_from_json(kernel_to_json(k), "kernel");
  for (double t : {0.0, 3.0, 10.0}) CHECK(eval(back, t) == eval(k, t));
}

TEST_CASE("loss-check regression through the runner") {
  const ExperimentResult r = run_experiment(resolve_config(loss_check()), 1);
  CHECK(r.failed_cells == 0);
  CHECK(std::abs(r.summary["loss"].get<double>() - 1.0 / 6.0) <= 1e-9);
}

TEST_CASE("failed cells are reported, not fatal") {
  Json cfg = Json::parse(R"({
    "experiment": "rate-sweep",
    "kernel": {"kind": "expsum", "coeffs": [1.0], "rates": [1.0]},
    "numeric": {"beta": 8.0},
    "sweep": {"m": [2, 4]}
  })");
  const ExperimentResult r = run_experiment(resolve_config(cfg), 2);
  CHECK(r.total_cells == 2);
  CHECK(r.failed_cells == 2);
  CHECK(r.summary["cell_errors"].size() == 2);
}

TEST_CASE("outputs do not depend on the worker count or the run") {
  Json cfg = Json::parse(R"({
    "experiment": "rate-sweep",
    "kernel": {"kind": "expsum", "coeffs": [1.0, 1.0], "rates": [1.0, 3.0]},
    "numeric": {"beta": 1.95},
    "sweep": {"m": [2, 4, 8, 16]}
  })");
  const Json r = resolve_config(cfg);
  const fs::path base = fs::temp_directory_path() / "memlab_det";
  fs::remove_all(base);
  write_result((base / "a").string(), r, run_experiment(r, 1));
  write_result((base / "b").string(), r, run_experiment(r, 4));
  write_result((base / "c").string(), r, run_experiment(r, 4));
  CHECK(slurp(base / "a" / "results.csv") == slurp(base / "b" / "results.csv"));
  CHECK(slurp(base / "b" / "results.csv") == slurp(base / "c" / "results.csv"));
  CHECK(fs::exists(base / "a" / "summary.json"));
  CHECK(fs::exists(base / "a" / "resolved_config.json"));
  const Json echoed = Json::parse(slurp(base / "a" / "resolved_config.json"));
  CHECK(echoed == r);
  fs::remove_all(base);
}
