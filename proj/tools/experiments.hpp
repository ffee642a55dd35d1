#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace memlab::cli {

struct CatalogEntry {
  std::string name;
  std::string analog;
};

const std::vector<CatalogEntry>& catalog();

struct NamedTable {
  std::string file;
  CsvTable table;
};

struct ExperimentResult {
  CsvTable table;                 // results.csv, one row per point, cells in axis order
  Json summary;                   // summary.json body, without the timestamp
  std::vector<NamedTable> extra_csv;
  std::vector<std::pair<std::string, Json>> extra_json;
  int failed_cells = 0;
  int total_cells = 0;
};

// Runs every sweep cell of a resolved config on `workers` threads. Output content and order
// do not depend on the worker count.
ExperimentResult run_experiment(const Json& resolved, int workers);

// Writes results.csv, summary.json, resolved_config.json and any extra files into out_dir.
void write_result(const std::string& out_dir, const Json& resolved, const ExperimentResult& result);

}  // namespace memlab::cli
