#pragma once

#include <string>

#include "memlab/approx.hpp"
#include "memlab/dynamics.hpp"
#include "memlab/io.hpp"
#include "memlab/landscape.hpp"
#include "memlab/rnnsim.hpp"

namespace memlab::cli {

// Reads a JSON config file. Parse errors and schema errors both surface as ConfigError
// with a line number or a field path in the message.
Json load_config(const std::string& path);

// Fills defaults for the named experiment and validates every field it reads.
Json resolve_config(const Json& raw);

MemoryKernel kernel_from_json(const Json& j, const std::string& where);
Json kernel_to_json(const MemoryKernel& k);
Model model_from_json(const Json& j, const std::string& where);

// Typed field access with ConfigError diagnostics naming the field path.
double get_double(const Json& j, const std::string& key, const std::string& where);
long get_long(const Json& j, const std::string& key, const std::string& where);
std::vector<double> get_doubles(const Json& j, const std::string& key, const std::string& where);
std::vector<long> get_longs(const Json& j, const std::string& key, const std::string& where);
std::string get_string(const Json& j, const std::string& key, const std::string& where);

}  // namespace memlab::cli
