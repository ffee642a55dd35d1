#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace memlab::cli {

namespace {

std::string path_of(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

const Json& require(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing field '" + path_of(where, key) + "'");
  return j.at(key);
}

Vec vec_from(const Json& j, const std::string& key, const std::string& where) {
  const auto v = get_doubles(j, key, where);
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

const std::map<std::string, Json>& defaults() {
  static const std::map<std::string, Json> d = {
      {"loss-check", {{"numeric", {{"hessian", true}}}}},
      {"flow",
       {{"numeric",
         {{"optimizer", "gradient"},
          {"method", "rk45"},
          {"tau_max", 100.0},
          {"delta", 1e-3},
          {"rtol", 1e-9},
          {"atol", 1e-12},
          {"h", 1e-3},
          {"record_stride", 0.0},
          {"rho", 0.5},
          {"eta", 1.0}}}}},
      {"escape-sweep",
       {{"numeric", {{"tau_max", 1e7}, {"delta", 1e-3}, {"rtol", 1e-9}, {"atol", 1e-12}, {"jitter", 0.0}}},
        {"sweep", {{"seeds", {0}}}}}},
      {"plateau-2d",
       {{"w_star", {1.0, 2.0}},
        {"numeric",
         {{"xi_factor", 10.0}, {"tau_max", 1e5}, {"eps_sep", 0.1}, {"eps_loss", 1e-3}, {"reach_tol", 1e-2},
          {"rtol", 1e-11}, {"atol", 1e-14}}}}},
      {"landscape-enum",
       {{"mode", "enumerate"},
        {"numeric", {{"starts", 32}, {"a1_lo", -0.5}, {"a1_hi", 1.5}, {"points", 101}}}}},
      {"rate-sweep", {{"numeric", {{"alpha", 1}}}}},
      {"min-width", {{"numeric", {{"alpha", 1}, {"m_cap", 64}, {"full_curve", false}, {"scale", 1.0}}}}},
      {"quadratic-escape",
       {{"numeric", {{"delta0", 0.01}, {"delta_init_factor", 1.0}}}, {"sweep", {{"method", {"gd", "momentum"}}}}}},
      {"rnn-train",
       {{"rnn", {{"m", 16}, {"decay_lo", 0.1}, {"decay_hi", 1.0}, {"offdiag_scale", 0.3}}},
        {"train", {{"dt", 0.1}, {"horizon", 32.0}, {"lr", 1.0}, {"momentum", 0.9}, {"steps", 1000}, {"loss", "mean"}}},
        {"sweep", {{"optimizer", {"gd", "heavy-ball"}}}}}},
      {"ito-check",
       {{"ensemble", {{"n_paths", 10000}, {"dt", 0.01}, {"horizon", 6.4}}},
        {"pair", {{"m", 2}, {"m_star", 2}}}}},
  };
  return d;
}

const std::map<std::string, std::vector<std::string>>& required_axes() {
  static const std::map<std::string, std::vector<std::string>> r = {
      {"escape-sweep", {"omega", "seeds"}}, {"plateau-2d", {"delta"}},   {"rate-sweep", {"m"}},
      {"min-width", {"omega", "eps"}},      {"quadratic-escape", {"eps", "method"}},
      {"rnn-train", {"seeds", "optimizer"}}, {"ito-check", {"seeds"}},
  };
  return r;
}

}  // namespace

double get_double(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_number()) throw ConfigError("field '" + path_of(where, key) + "' must be a number");
  return v.get<double>();
}

long get_long(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_number_integer()) throw ConfigError("field '" + path_of(where, key) + "' must be an integer");
  return v.get<long>();
}

std::vector<double> get_doubles(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_array()) throw ConfigError("field '" + path_of(where, key) + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("field '" + path_of(where, key) + "' must be a list of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<long> get_longs(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_array()) throw ConfigError("field '" + path_of(where, key) + "' must be a list of integers");
  std::vector<long> out;
  for (const auto& x : v) {
    if (!x.is_number_integer()) throw ConfigError("field '" + path_of(where, key) + "' must be a list of integers");
    out.push_back(x.get<long>());
  }
  return out;
}

std::string get_string(const Json& j, const std::string& key, const std::string& where) {
  const Json& v = require(j, key, where);
  if (!v.is_string()) throw ConfigError("field '" + path_of(where, key) + "' must be a string");
  return v.get<std::string>();
}

MemoryKernel kernel_from_json(const Json& j, const std::string& where) {
  const std::string kind = get_string(j, "kind", where);
  try {
    if (kind == "expsum") return ExpSumKernel(vec_from(j, "coeffs", where), vec_from(j, "rates", where));
    if (kind == "gaussian_bump")
      return GaussianBump(get_double(j, "amplitude", where), get_double(j, "center", where),
                          get_double(j, "width", where));
    if (kind == "composite") {
      const std::string b = path_of(where, "base"), g = path_of(where, "bump");
      const Json& base = require(j, "base", where);
      const Json& bump = require(j, "bump", where);
      return CompositeKernel{ExpSumKernel(vec_from(base, "coeffs", b), vec_from(base, "rates", b)),
                             GaussianBump(get_double(bump, "amplitude", g), get_double(bump, "center", g),
                                          get_double(bump, "width", g))};
    }
    if (kind == "power_law") return PowerLawKernel(get_double(j, "exponent", where), get_double(j, "scale", where));
    if (kind == "truncated")
      return TruncatedKernel(kernel_from_json(require(j, "inner", where), path_of(where, "inner")),
                             get_double(j, "cutoff", where));
  } catch (const DomainError& e) {
    throw ConfigError("field '" + where + "': " + e.what());
  }
  throw ConfigError("field '" + path_of(where, "kind") + "': unknown kernel kind '" + kind + "'");
}

Json kernel_to_json(const MemoryKernel& k) {
  struct {
    Json operator()(const ExpSumKernel& e) const {
      return {{"kind", "expsum"}, {"coeffs", vec_json(e.coeffs)}, {"rates", vec_json(e.rates)}};
    }
    Json operator()(const GaussianBump& b) const {
      return {{"kind", "gaussian_bump"}, {"amplitude", b.amplitude}, {"center", b.center}, {"width", b.width}};
    }
    Json operator()(const CompositeKernel& c) const {
      return {{"kind", "composite"},
              {"base", {{"coeffs", vec_json(c.base.coeffs)}, {"rates", vec_json(c.base.rates)}}},
              {"bump", {{"amplitude", c.bump.amplitude}, {"center", c.bump.center}, {"width", c.bump.width}}}};
    }
    Json operator()(const PowerLawKernel& p) const {
      return {{"kind", "power_law"}, {"exponent", p.exponent}, {"scale", p.scale}};
    }
    Json operator()(const TruncatedKernel& t) const {
      return {{"kind", "truncated"}, {"inner", kernel_to_json(*t.inner)}, {"cutoff", t.cutoff}};
    }
  } v;
  return std::visit(v, k);
}

Model model_from_json(const Json& j, const std::string& where) {
  try {
    return Model(vec_from(j, "a", where), vec_from(j, "w", where));
  } catch (const InvalidModel& e) {
    throw ConfigError("field '" + where + "': " + e.what());
  }
}

Json load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // Translate the byte offset into a line number.
    const size_t upto = std::min(text.size(), static_cast<size_t>(e.byte));
    const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    throw ConfigError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

Json resolve_config(const Json& raw) {
  if (!raw.is_object()) throw ConfigError("config root must be an object");
  const std::string exp = get_string(raw, "experiment", "");
  const auto it = defaults().find(exp);
  if (it == defaults().end()) throw ConfigError("field 'experiment': unknown experiment '" + exp + "'");

  static const std::set<std::string> top = {"experiment", "seed", "output", "kernel", "init",   "numeric",
                                            "sweep",      "w_star", "mode", "rnn",    "train", "ensemble", "pair"};
  for (const auto& [k, v] : raw.items())
    if (!top.count(k)) throw ConfigError("field '" + k + "': unknown top-level key");

  Json cfg = it->second;
  cfg["experiment"] = exp;
  cfg["seed"] = 0;
  cfg["output"] = "out/" + exp;
  if (!cfg.contains("sweep")) cfg["sweep"] = Json::object();
  cfg.merge_patch(raw);

  if (!cfg["seed"].is_number_unsigned() && !(cfg["seed"].is_number_integer() && cfg["seed"].get<long>() >= 0))
    throw ConfigError("field 'seed' must be a non-negative integer");

  for (const auto& [k, v] : cfg["sweep"].items()) {
    if (!v.is_array()) throw ConfigError("field 'sweep." + k + "' must be a list");
    if (v.empty()) throw ConfigError("field 'sweep." + k + "': sweep axis is empty");
  }
  if (auto r = required_axes().find(exp); r != required_axes().end())
    for (const auto& axis : r->second)
      if (!cfg["sweep"].contains(axis)) throw ConfigError("missing field 'sweep." + axis + "'");

  // Validate the pieces each experiment reads so errors surface before any work starts.
  if (exp == "loss-check" || exp == "flow" || exp == "escape-sweep") {
    kernel_from_json(require(cfg, "kernel", ""), "kernel");
    model_from_json(require(cfg, "init", ""), "init");
  }
  if (exp == "escape-sweep" || (exp == "loss-check" && cfg["sweep"].contains("omega"))) {
    if (get_string(cfg["kernel"], "kind", "kernel") != "composite")
      throw ConfigError("field 'kernel.kind': an omega sweep needs a composite kernel");
    for (double om : get_doubles(cfg["sweep"], "omega", "sweep"))
      if (!(om > 0)) throw ConfigError("field 'sweep.omega': values must be positive");
  }
  if (exp == "flow") {
    const auto opt = get_string(cfg["numeric"], "optimizer", "numeric");
    if (opt != "gradient" && opt != "heavy-ball")
      throw ConfigError("field 'numeric.optimizer' must be 'gradient' or 'heavy-ball'");
    const auto m = get_string(cfg["numeric"], "method", "numeric");
    if (m != "rk45" && m != "abm4") throw ConfigError("field 'numeric.method' must be 'rk45' or 'abm4'");
  }
  if (exp == "plateau-2d") {
    const auto ws = get_doubles(cfg, "w_star", "");
    if (ws.size() != 2 || !(ws[0] > 0) || !(ws[1] > ws[0]))
      throw ConfigError("field 'w_star' must be two increasing positive rates");
  }
  if (exp == "landscape-enum") {
    const auto mode = get_string(cfg, "mode", "");
    const auto k = kernel_from_json(require(cfg, "kernel", ""), "kernel");
    if (mode == "enumerate") {
      for (long m : get_longs(cfg["sweep"], "m", "sweep"))
        if (m < 1 || m > 6) throw ConfigError("field 'sweep.m': enumeration supports 1 <= m <= 6");
    } else if (mode == "classify-2d") {
      const auto* e = std::get_if<ExpSumKernel>(&k);
      if (!e || e->coeffs.size() != 2) throw ConfigError("field 'kernel': classify-2d needs a two-term expsum");
    } else {
      throw ConfigError("field 'mode' must be 'enumerate' or 'classify-2d'");
    }
  }
  if (exp == "rate-sweep") {
    kernel_from_json(require(cfg, "kernel", ""), "kernel");
    for (long m : get_longs(cfg["sweep"], "m", "sweep"))
      if (m < 1 || m > 64) throw ConfigError("field 'sweep.m': widths must lie in 1..64");
    if (!cfg["numeric"].contains("beta") && !cfg["numeric"].contains("T"))
      throw ConfigError("missing field 'numeric.beta' (or 'numeric.T' for a power-law kernel)");
  }
  if (exp == "min-width") {
    const long cap = get_long(cfg["numeric"], "m_cap", "numeric");
    if (cap < 1 || cap > 64) throw ConfigError("field 'numeric.m_cap' must lie in 1..64");
    for (double om : get_doubles(cfg["sweep"], "omega", "sweep"))
      if (!(om > 0)) throw ConfigError("field 'sweep.omega': values must be positive");
  }
  if (exp == "quadratic-escape") {
    for (const auto& m : cfg["sweep"]["method"])
      if (m != "gd" && m != "momentum") throw ConfigError("field 'sweep.method': entries must be 'gd' or 'momentum'");
  }
  if (exp == "rnn-train") {
    kernel_from_json(require(cfg, "kernel", ""), "kernel");
    for (const auto& m : cfg["sweep"]["optimizer"])
      if (m != "gd" && m != "heavy-ball")
        throw ConfigError("field 'sweep.optimizer': entries must be 'gd' or 'heavy-ball'");
    const auto loss = get_string(cfg["train"], "loss", "train");
    if (loss != "mean" && loss != "integral") throw ConfigError("field 'train.loss' must be 'mean' or 'integral'");
    if (!cfg["train"].contains("lr_heavy_ball")) cfg["train"]["lr_heavy_ball"] = cfg["train"]["lr"];
  }
  return cfg;
}

}  // namespace memlab::cli
