#pragma once

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace memlab {

using Json = nlohmann::json;

// Empty cells (monostate) stand for "no value", e.g. a hitting time that never happened.
using CsvCell = std::variant<std::monostate, double, long long, std::string>;

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<CsvCell>> rows;

  void add(std::vector<CsvCell> row);
};

// 17 significant digits, '.' decimal point, independent of the global locale.
std::string format_double(double v);
std::string csv_escape(const std::string& field);
void write_csv(std::ostream& os, const CsvTable& table);
void write_csv_file(const std::string& path, const CsvTable& table);
void write_json_file(const std::string& path, const Json& j);

}  // namespace memlab
