#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "memlab/errors.hpp"
#include "memlab/io.hpp"

namespace memlab {

void CsvTable::add(std::vector<CsvCell> row) {
  if (row.size() != columns.size()) throw DomainError("csv: row width does not match header");
  rows.push_back(std::move(row));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

std::string render(const CsvCell& c) {
  struct {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(long long v) const { return std::to_string(v); }
    std::string operator()(const std::string& s) const { return csv_escape(s); }
  } visitor;
  return std::visit(visitor, c);
}

}  // namespace

void write_csv(std::ostream& os, const CsvTable& table) {
  for (size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << csv_escape(table.columns[i]);
  os << "\r\n";
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << render(row[i]);
    os << "\r\n";
  }
}

void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot open " + path + " for writing");
  write_csv(f, table);
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DomainError("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
}

}  // namespace memlab
