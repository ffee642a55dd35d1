#include "experiments.hpp"

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <thread>

namespace memlab::cli {

namespace {

struct CellOutput {
  std::vector<std::vector<CsvCell>> rows;
  Json info;
  std::vector<NamedTable> files;
  std::vector<std::pair<std::string, Json>> jsons;
};

using Outputs = std::vector<std::optional<CellOutput>>;

struct Plan {
  std::vector<std::string> axes;     // leading columns, read from each cell
  std::vector<std::string> columns;  // value columns produced by run
  std::vector<Json> cells;
  std::function<CellOutput(const Json& cell, std::uint64_t index)> run;
  std::function<Json(const std::vector<Json>& cells, const Outputs& out)> summarize;
};

CsvCell opt_cell(const std::optional<double>& v) { return v ? CsvCell(*v) : CsvCell(); }
Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

CsvCell json_cell(const Json& v) {
  if (v.is_number_integer()) return static_cast<long long>(v.get<long long>());
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return static_cast<long long>(v.get<bool>());
  return {};
}

std::uint64_t config_seed(const Json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

// Cartesian product of the named axes, first axis outermost. The "seeds" axis is stored per cell as "seed".
std::vector<Json> product(const Json& sweep, const std::vector<std::string>& axes) {
  std::vector<Json> cells{Json::object()};
  for (const auto& axis : axes) {
    const std::string key = axis == "seed" ? "seeds" : axis;
    std::vector<Json> next;
    for (const auto& c : cells)
      for (const auto& v : sweep.at(key)) {
        Json n = c;
        n[axis] = v;
        next.push_back(std::move(n));
      }
    cells = std::move(next);
  }
  return cells;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json line_json(const LineFit& f, size_t points) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"points", points}};
}

MemoryKernel with_omega(const MemoryKernel& k, double omega) {
  const auto* c = std::get_if<CompositeKernel>(&k);
  if (!c) throw DomainError("omega sweep needs a composite kernel");
  return CompositeKernel{c->base, GaussianBump(c->bump.amplitude, 1.0 / omega, c->bump.width)};
}

OdeMethod method_of(const Json& numeric) {
  return get_string(numeric, "method", "numeric") == "abm4" ? OdeMethod::ABM4 : OdeMethod::RK45;
}

// ---------------------------------------------------------------- loss-check

Plan plan_loss_check(const Json& cfg) {
  Plan p;
  const MemoryKernel kernel = kernel_from_json(cfg["kernel"], "kernel");
  const Model init = model_from_json(cfg["init"], "init");
  const bool with_h = cfg["numeric"].value("hessian", true);

  if (!cfg["sweep"].contains("omega")) {
    p.columns = {"quantity", "i", "j", "value"};
    p.cells = {Json::object()};
    p.run = [=](const Json&, std::uint64_t) {
      CellOutput o;
      const LossReport r = evaluate(init, kernel, with_h);
      o.rows.push_back({std::string("loss"), {}, {}, r.value});
      for (Eigen::Index i = 0; i < r.gradient.size(); ++i)
        o.rows.push_back({std::string("grad"), static_cast<long long>(i), {}, r.gradient(i)});
      o.info["loss"] = r.value;
      o.info["grad"] = std::vector<double>(r.gradient.data(), r.gradient.data() + r.gradient.size());
      o.info["grad_norm"] = r.gradient.norm();
      if (r.hessian) {
        const Mat& h = *r.hessian;
        for (Eigen::Index i = 0; i < h.rows(); ++i)
          for (Eigen::Index j = 0; j < h.cols(); ++j)
            o.rows.push_back({std::string("hessian"), static_cast<long long>(i), static_cast<long long>(j), h(i, j)});
        const auto eig = sym_eig(h);
        o.info["hessian_eig_max"] = eig.eigenvalues(0);
        o.info["hessian_eig_min"] = eig.eigenvalues(eig.eigenvalues.size() - 1);
      }
      return o;
    };
    p.summarize = [](const std::vector<Json>&, const Outputs& out) { return out[0] ? out[0]->info : Json::object(); };
    return p;
  }

  p.axes = {"omega"};
  p.columns = {"inv_omega", "loss", "grad_norm"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const double om = cell["omega"].get<double>();
    const MemoryKernel k = with_omega(kernel, om);
    CellOutput o;
    const LossReport r = evaluate(init, k, false);
    o.rows.push_back({1.0 / om, r.value, r.gradient.norm()});
    o.info = {{"inv_omega", 1.0 / om}, {"grad_norm", r.gradient.norm()}};
    return o;
  };
  const double w_min = init.w.minCoeff();
  p.summarize = [w_min](const std::vector<Json>&, const Outputs& out) {
    std::vector<double> x, y;
    for (const auto& o : out)
      if (o && o->info["grad_norm"].get<double>() > 0) {
        x.push_back(o->info["inv_omega"].get<double>());
        y.push_back(std::log(o->info["grad_norm"].get<double>()));
      }
    Json s;
    s["w_min"] = w_min;
    s["expected_slope"] = -w_min;
    if (x.size() >= 2) {
      const LineFit f = fit_line(x, y);
      s["fit_log_grad_norm_vs_inv_omega"] = line_json(f, x.size());
      s["slope_rel_error"] = std::abs(f.slope + w_min) / w_min;
    }
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- flow

Plan plan_flow(const Json& cfg) {
  Plan p;
  const Json& num = cfg["numeric"];
  FlowConfig fc;
  fc.target = kernel_from_json(cfg["kernel"], "kernel");
  fc.init = model_from_json(cfg["init"], "init");
  fc.method = method_of(num);
  fc.tau_max = get_double(num, "tau_max", "numeric");
  fc.delta = get_double(num, "delta", "numeric");
  fc.rtol = get_double(num, "rtol", "numeric");
  fc.atol = get_double(num, "atol", "numeric");
  fc.h_fixed = get_double(num, "h", "numeric");
  const double stride = get_double(num, "record_stride", "numeric") > 0 ? get_double(num, "record_stride", "numeric")
                                                                         : fc.tau_max / 1000.0;
  const bool heavy = get_string(num, "optimizer", "numeric") == "heavy-ball";
  const double rho = get_double(num, "rho", "numeric"), eta = get_double(num, "eta", "numeric");

  const CsvTable header = [&] {
    CsvTable t;
    t.columns = {"tau", "J", "grad_norm"};
    for (Eigen::Index i = 1; i <= fc.init.m(); ++i) t.columns.push_back("a_" + std::to_string(i));
    for (Eigen::Index i = 1; i <= fc.init.m(); ++i) t.columns.push_back("w_" + std::to_string(i));
    return t;
  }();
  p.columns = header.columns;
  p.cells = {Json::object()};
  p.run = [=](const Json&, std::uint64_t) {
    const FlowTrajectory traj = heavy ? heavy_ball_flow(fc, rho, eta) : gradient_flow(fc);
    CellOutput o;
    o.rows = trajectory_table(traj, stride).rows;
    const PlateauReport pl = detect_plateau(resample_loss(traj, 1000));
    o.info = {{"loss0", traj.loss0},
              {"loss_final", traj.loss_at(traj.ode.t_end())},
              {"tau_end", traj.ode.t_end()},
              {"hitting", hitting_json(traj.events)},
              {"delta_warning", fc.delta_warning()},
              {"plateau", {{"flagged", pl.flagged}, {"start_fraction", double(pl.start) / pl.samples},
                           {"duration_fraction", double(pl.duration) / pl.samples}}},
              {"ode", {{"accepted", traj.ode.stats.accepted}, {"rejected", traj.ode.stats.rejected},
                       {"rhs_evals", traj.ode.stats.rhs_evals}}}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) { return out[0] ? out[0]->info : Json::object(); };
  return p;
}

// ---------------------------------------------------------------- escape-sweep

Plan plan_escape(const Json& cfg) {
  Plan p;
  const Json& num = cfg["numeric"];
  const MemoryKernel kernel = kernel_from_json(cfg["kernel"], "kernel");
  const Model init = model_from_json(cfg["init"], "init");
  const double tau_max = get_double(num, "tau_max", "numeric"), delta = get_double(num, "delta", "numeric");
  const double rtol = get_double(num, "rtol", "numeric"), atol = get_double(num, "atol", "numeric");
  const double jitter = get_double(num, "jitter", "numeric");
  const std::uint64_t seed = config_seed(cfg);

  p.axes = {"omega", "seed"};
  p.columns = {"inv_omega", "tau0_param", "tau0_loss", "prediction", "grad_norm0", "lambda_min",
               "prediction_le_measured"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t index) {
    const double om = cell["omega"].get<double>();
    Model start = init;
    if (jitter > 0) {
      CounterRng rng(seed, index);
      std::normal_distribution<double> n(0.0, 1.0);
      for (Eigen::Index i = 0; i < start.m(); ++i) {
        start.a(i) += jitter * n(rng);
        start.w(i) *= std::exp(jitter * n(rng));
      }
    }
    FlowConfig fc;
    fc.target = with_omega(kernel, om);
    fc.init = start;
    fc.tau_max = tau_max;
    fc.delta = delta;
    fc.rtol = rtol;
    fc.atol = atol;
    fc.stop_at_loss_hit = true;
    const FlowTrajectory traj = gradient_flow(fc);
    const EscapePrediction pred = linearized_escape_prediction(start, fc.target, delta);
    const auto& h = traj.events;
    const bool ok = h.tau0_param && pred.tau <= *h.tau0_param;
    CellOutput o;
    o.rows.push_back({1.0 / om, opt_cell(h.tau0_param), opt_cell(h.tau0_loss), pred.tau, pred.grad_norm,
                      pred.lambda_min, static_cast<long long>(ok)});
    o.info = {{"inv_omega", 1.0 / om}, {"tau0_loss", opt_json(h.tau0_loss)}, {"prediction_ok", ok}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) {
    std::vector<double> x, y;
    bool all_ok = true;
    for (const auto& o : out) {
      if (!o) {
        all_ok = false;
        continue;
      }
      all_ok = all_ok && o->info["prediction_ok"].get<bool>();
      if (o->info["tau0_loss"].is_number()) {
        x.push_back(o->info["inv_omega"].get<double>());
        y.push_back(std::log(o->info["tau0_loss"].get<double>()));
      }
    }
    Json s;
    s["predictions_below_measured"] = all_ok;
    s["cells_with_loss_hit"] = x.size();
    if (x.size() >= 2) s["fit_log_tau0_loss_vs_inv_omega"] = line_json(fit_line(x, y), x.size());
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- plateau-2d

Plan plan_plateau_2d(const Json& cfg) {
  Plan p;
  const Json& num = cfg["numeric"];
  const auto ws = get_doubles(cfg, "w_star", "");
  const std::pair<double, double> w_star{ws[0], ws[1]};
  Plateau2dOptions opt;
  opt.eps_sep = get_double(num, "eps_sep", "numeric");
  opt.eps_loss = get_double(num, "eps_loss", "numeric");
  opt.reach_tol = get_double(num, "reach_tol", "numeric");
  opt.rtol = get_double(num, "rtol", "numeric");
  opt.atol = get_double(num, "atol", "numeric");
  const double tau_max = get_double(num, "tau_max", "numeric");
  const bool fixed_xi = num.contains("xi");
  const double xi_value = fixed_xi ? get_double(num, "xi", "numeric") : get_double(num, "xi_factor", "numeric");

  p.axes = {"delta"};
  p.columns = {"log_inv_delta", "xi", "t_separation", "t_reach", "t_plateau"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const double delta = cell["delta"].get<double>();
    const double xi = fixed_xi ? xi_value : xi_value * delta;
    const Plateau2dResult r = flow_2d_symmetric(w_star, xi, delta, tau_max, opt);
    CellOutput o;
    o.rows.push_back({std::log(1.0 / delta), xi, opt_cell(r.t_separation), opt_cell(r.t_reach), opt_cell(r.t_plateau)});
    o.info = {{"log_inv_delta", std::log(1.0 / delta)}, {"t_plateau", opt_json(r.t_plateau)},
              {"v_limit", r.v_limit}, {"gap_rate", r.gap_rate_at_limit}};
    return o;
  };
  p.summarize = [fixed_xi, xi_value](const std::vector<Json>&, const Outputs& out) {
    Json s;
    s["xi_mode"] = fixed_xi ? "fixed" : "proportional";
    s[fixed_xi ? "xi" : "xi_factor"] = xi_value;
    std::vector<double> x, y;
    for (const auto& o : out) {
      if (!o) continue;
      s["v_limit"] = o->info["v_limit"];
      s["gap_rate"] = o->info["gap_rate"];
      s["predicted_slope"] = 1.0 / o->info["gap_rate"].get<double>();
      if (o->info["t_plateau"].is_number()) {
        x.push_back(o->info["log_inv_delta"].get<double>());
        y.push_back(o->info["t_plateau"].get<double>());
      }
    }
    if (x.size() >= 2) {
      const LineFit f = fit_line(x, y);
      s["fit_t_plateau_vs_log_inv_delta"] = line_json(f, x.size());
      const double pred = s["predicted_slope"].get<double>();
      s["slope_rel_error"] = std::abs(f.slope - pred) / std::abs(pred);
    }
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- landscape-enum

Plan plan_enumerate(const Json& cfg) {
  Plan p;
  const MemoryKernel kernel = kernel_from_json(cfg["kernel"], "kernel");
  const std::uint64_t seed = config_seed(cfg);
  AnchorOptions aopt;
  aopt.starts = static_cast<int>(get_long(cfg["numeric"], "starts", "numeric"));

  p.axes = {"m"};
  p.columns = {"d", "space", "grad_norm", "rank", "zero_count", "rank_bound", "zero_bound", "ok"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t index) {
    const int m = cell["m"].get<int>();
    CellOutput o;
    CsvTable counts;
    counts.columns = {"m", "d", "enumerated", "formula"};
    Json spaces = Json::array();
    CounterRng rng(seed, index);
    std::normal_distribution<double> n(0.0, 1.0);
    long long total = 0;
    double max_grad = 0.0;
    bool all_ok = true;
    for (int d = 1; d <= m; ++d) {
      const AnchorFit fit = find_nondegenerate_min(kernel, d, seed + static_cast<std::uint64_t>(d), aopt);
      if (!fit.found) throw AnchorNotCritical("no non-degenerate minimizer of J_" + std::to_string(d));
      const auto parts = ordered_partitions(m, d);
      long long k = 0;
      for (const Partition& part : parts) {
        const CriticalSpace space(part, fit.b, fit.v);
        Vec free(m - d);
        for (Eigen::Index i = 0; i < free.size(); ++i) free(i) = n(rng);
        const SpaceHessian h = hessian_on_space(space, free, kernel);
        const bool ok = h.grad_norm <= 1e-7 && h.rank <= m + d && h.zero_count >= m - d;
        all_ok = all_ok && ok;
        max_grad = std::max(max_grad, h.grad_norm);
        o.rows.push_back({static_cast<long long>(d), k++, h.grad_norm, static_cast<long long>(h.rank),
                          static_cast<long long>(h.zero_count), static_cast<long long>(m + d),
                          static_cast<long long>(m - d), static_cast<long long>(ok)});
        Json sj = space_json(space, h);
        sj["m"] = m;
        spaces.push_back(std::move(sj));
      }
      const std::uint64_t formula = count_critical_spaces(m, d) - (d > 1 ? count_critical_spaces(m, d - 1) : 0);
      counts.add({static_cast<long long>(m), static_cast<long long>(d), static_cast<long long>(parts.size()),
                  static_cast<long long>(formula)});
      total += static_cast<long long>(parts.size());
    }
    o.info = {{"m", m},
              {"enumerated", total},
              {"formula", count_critical_spaces(m, m)},
              {"all_ok", all_ok},
              {"max_grad_norm", max_grad}};
    o.files.push_back({"counts_m" + std::to_string(m) + ".csv", counts});
    o.jsons.push_back({"spaces_m" + std::to_string(m) + ".json", spaces});
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) {
    Json s;
    s["per_m"] = Json::array();
    bool all_ok = true, counts_match = true;
    for (const auto& o : out) {
      if (!o) {
        all_ok = counts_match = false;
        continue;
      }
      s["per_m"].push_back(o->info);
      all_ok = all_ok && o->info["all_ok"].get<bool>();
      counts_match = counts_match && o->info["enumerated"].get<long long>() == o->info["formula"].get<long long>();
    }
    s["zero_eig_rel_threshold"] = kZeroEigRel;
    s["all_spaces_ok"] = all_ok;
    s["counts_match"] = counts_match;
    return s;
  };
  return p;
}

std::string expected_label(double frac, const ExpSumKernel& k) {
  if (std::abs(frac) < 1e-9 || std::abs(frac - 1.0) < 1e-9) return "boundary";
  const bool inside = frac > 0 && frac < 1;
  if (k.coeffs(0) * k.coeffs(1) < 0) return inside ? "degenerate-stable" : "saddle";
  if (k.rates(1) / k.rates(0) < 2.0 + std::sqrt(3.0)) return inside ? "saddle" : "degenerate-stable";
  return "indeterminate";
}

Plan plan_classify(const Json& cfg) {
  Plan p;
  const ExpSumKernel kernel = std::get<ExpSumKernel>(kernel_from_json(cfg["kernel"], "kernel"));
  const Json& num = cfg["numeric"];
  const double lo = get_double(num, "a1_lo", "numeric"), hi = get_double(num, "a1_hi", "numeric");
  const long points = get_long(num, "points", "numeric");
  if (points < 2) throw ConfigError("field 'numeric.points' must be at least 2");
  const std::uint64_t seed = config_seed(cfg);
  std::vector<double> fracs(static_cast<size_t>(points));
  for (long i = 0; i < points; ++i) fracs[static_cast<size_t>(i)] = lo + (hi - lo) * i / (points - 1);

  p.columns = {"a1_fraction", "a1", "min_eig", "threshold", "label", "expected", "match"};
  p.cells = {Json::object()};
  p.run = [=](const Json&, std::uint64_t) {
    const Classification2d c = classify_2d(kernel, fracs, seed + 1);
    CellOutput o;
    std::map<std::string, int> counts;
    int mismatches = 0, stray_indeterminate = 0;
    for (size_t i = 0; i < c.points.size(); ++i) {
      const auto& pt = c.points[i];
      const std::string label = label_name(pt.label), exp = expected_label(fracs[i], kernel);
      const bool match = exp == "boundary" || exp == label;
      mismatches += !match;
      if (pt.label == Label2d::Indeterminate && exp != "boundary" && exp != "indeterminate") ++stray_indeterminate;
      ++counts[label];
      o.rows.push_back({fracs[i], pt.a1, pt.min_eig, pt.threshold, label, exp, static_cast<long long>(match)});
    }
    const double ratio = kernel.rates(1) / kernel.rates(0);
    o.info = {{"a_hat", c.a_hat},
              {"w_hat", c.w_hat},
              {"rate_ratio", ratio},
              {"ratio_below_2_plus_sqrt3", ratio < 2.0 + std::sqrt(3.0)},
              {"regime", kernel.coeffs(0) * kernel.coeffs(1) < 0 ? "opposite-sign" : "same-sign"},
              {"label_counts", counts},
              {"mismatches", mismatches},
              {"indeterminate_off_boundary", stray_indeterminate},
              {"pattern_ok", mismatches == 0 && stray_indeterminate == 0}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) { return out[0] ? out[0]->info : Json::object(); };
  return p;
}

// ---------------------------------------------------------------- rate-sweep

Plan plan_rate(const Json& cfg) {
  Plan p;
  const Json& num = cfg["numeric"];
  MemoryKernel kernel = kernel_from_json(cfg["kernel"], "kernel");
  const int alpha = static_cast<int>(get_long(num, "alpha", "numeric"));
  double beta;
  if (num.contains("T") && std::holds_alternative<PowerLawKernel>(kernel)) {
    const double T = get_double(num, "T", "numeric");
    kernel = TruncatedKernel(kernel, T);
    beta = 2.0 / T;
  } else {
    beta = get_double(num, "beta", "numeric");
  }

  p.axes = {"m"};
  p.columns = {"beta", "l1_error", "gamma_estimate"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const int m = cell["m"].get<int>();
    const RateConstruction rc = rate_construct(kernel, alpha, beta, m);
    const double err = l1_error(rc, kernel);
    CellOutput o;
    o.rows.push_back({beta, err, rc.gamma_estimate});
    o.info = {{"m", m}, {"l1_error", err}};
    return o;
  };
  p.summarize = [alpha](const std::vector<Json>&, const Outputs& out) {
    std::vector<double> x, y;
    for (const auto& o : out)
      if (o && o->info["l1_error"].get<double>() > 0) {
        x.push_back(std::log(o->info["m"].get<double>()));
        y.push_back(std::log(o->info["l1_error"].get<double>()));
      }
    Json s;
    s["alpha"] = alpha;
    s["expected_slope"] = -alpha;
    if (x.size() >= 2) s["fit_log_l1_vs_log_m"] = line_json(fit_line(x, y), x.size());
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- min-width

Plan plan_min_width(const Json& cfg) {
  Plan p;
  const Json& num = cfg["numeric"];
  WidthOptions wo;
  wo.alpha = static_cast<int>(get_long(num, "alpha", "numeric"));
  wo.m_cap = static_cast<int>(get_long(num, "m_cap", "numeric"));
  wo.stop_at_first = !num.value("full_curve", false);
  const double scale = get_double(num, "scale", "numeric");

  p.axes = {"omega", "eps"};
  p.columns = {"exponent", "m_min", "best_total", "capped"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const double om = cell["omega"].get<double>(), eps = cell["eps"].get<double>();
    const MemoryKernel k = PowerLawKernel(1.0 + om, scale);
    const WidthSweep sw = min_width_sweep(k, eps, wo);
    CellOutput o;
    o.rows.push_back({1.0 + om, sw.m_min ? CsvCell(static_cast<long long>(*sw.m_min)) : CsvCell(), sw.best_total,
                      static_cast<long long>(!sw.m_min)});
    CsvTable curve;
    curve.columns = {"omega", "eps", "m", "T", "beta", "l1_error", "tail_bound", "total"};
    for (const auto& pt : sw.curve)
      curve.add({om, eps, static_cast<long long>(pt.m), pt.T, pt.beta, pt.l1, pt.tail_bound, pt.total});
    o.files.push_back({"curves.csv", curve});
    o.info = {{"omega", om}, {"eps", eps}, {"m_min", sw.m_min ? Json(*sw.m_min) : Json(nullptr)}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) {
    // Per eps, m_min along decreasing omega; a capped cell counts as infinite width.
    std::map<double, std::vector<std::pair<double, double>>> by_eps;
    for (const auto& o : out) {
      if (!o) continue;
      const double m = o->info["m_min"].is_null() ? std::numeric_limits<double>::infinity()
                                                  : o->info["m_min"].get<double>();
      by_eps[o->info["eps"].get<double>()].push_back({o->info["omega"].get<double>(), m});
    }
    Json s;
    s["per_eps"] = Json::array();
    for (auto& [eps, pts] : by_eps) {
      std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      bool nondecreasing = true, strict = false;
      for (size_t i = 1; i < pts.size(); ++i) {
        nondecreasing = nondecreasing && pts[i].second >= pts[i - 1].second;
        strict = strict || pts[i].second > pts[i - 1].second;
      }
      Json e;
      e["eps"] = eps;
      e["omega_descending"] = Json::array();
      e["m_min"] = Json::array();
      for (const auto& [om, m] : pts) {
        e["omega_descending"].push_back(om);
        e["m_min"].push_back(std::isinf(m) ? Json(nullptr) : Json(m));
      }
      e["nondecreasing"] = nondecreasing;
      e["strict_increase"] = strict;
      s["per_eps"].push_back(e);
    }
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- quadratic-escape

Plan plan_quadratic(const Json& cfg) {
  Plan p;
  const double delta0 = get_double(cfg["numeric"], "delta0", "numeric");
  const double factor = get_double(cfg["numeric"], "delta_init_factor", "numeric");

  p.axes = {"eps", "method"};
  p.columns = {"delta_init", "threshold", "measured", "formula", "rel_error"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const double eps = cell["eps"].get<double>();
    const std::string method = cell["method"].get<std::string>();
    const double d_init = factor * eps;
    const QuadraticEscape q =
        quadratic_escape(eps, d_init, delta0, method == "gd" ? EscapeMethod::GradientFlow : EscapeMethod::Momentum);
    const double rel = std::abs(q.measured - q.formula) / q.formula;
    CellOutput o;
    o.rows.push_back({d_init, q.threshold, q.measured, q.formula, rel});
    o.info = {{"eps", eps}, {"method", method}, {"measured", q.measured}, {"rel_error", rel}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) {
    std::map<std::string, double> worst;
    std::map<double, std::map<std::string, double>> by_eps;
    for (const auto& o : out) {
      if (!o) continue;
      const std::string m = o->info["method"];
      worst[m] = std::max(worst[m], o->info["rel_error"].get<double>());
      by_eps[o->info["eps"].get<double>()][m] = o->info["measured"].get<double>();
    }
    Json s;
    s["max_rel_error"] = worst;
    s["ratio_gd_over_momentum"] = Json::array();
    // by_eps iterates eps ascending, so the ratio should shrink along it.
    bool grows = true;
    double prev = std::numeric_limits<double>::infinity();
    int n = 0;
    for (const auto& [eps, m] : by_eps) {
      if (!m.count("gd") || !m.count("momentum")) continue;
      const double r = m.at("gd") / m.at("momentum");
      s["ratio_gd_over_momentum"].push_back({{"eps", eps}, {"ratio", r}, {"ratio_times_sqrt_eps", r * std::sqrt(eps)}});
      grows = grows && r < prev;
      prev = r;
      ++n;
    }
    s["ratio_grows_as_eps_shrinks"] = grows && n >= 2;
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- rnn-train

Plan plan_rnn_train(const Json& cfg) {
  Plan p;
  const MemoryKernel kernel = kernel_from_json(cfg["kernel"], "kernel");
  const Json& r = cfg["rnn"];
  const Json& t = cfg["train"];
  RnnInit init;
  init.m = static_cast<int>(get_long(r, "m", "rnn"));
  init.decay_lo = get_double(r, "decay_lo", "rnn");
  init.decay_hi = get_double(r, "decay_hi", "rnn");
  init.offdiag_scale = get_double(r, "offdiag_scale", "rnn");
  init.decay_grid = r.value("decay_grid", false);
  const std::string io = r.value("io_init", std::string("normal"));
  init.io_scale = r.value("io_scale", 1.0);
  init.io = io == "sign" ? IoInit::Sign : io == "matched" ? IoInit::Matched : IoInit::Normal;
  TrainOptions base;
  base.dt = get_double(t, "dt", "train");
  base.horizon = get_double(t, "horizon", "train");
  base.steps = get_long(t, "steps", "train");
  base.momentum = get_double(t, "momentum", "train");
  base.time_average = get_string(t, "loss", "train") == "mean";
  init.dt = base.dt;
  const double lr_gd = get_double(t, "lr", "train"), lr_hb = get_double(t, "lr_heavy_ball", "train");
  const std::uint64_t seed = config_seed(cfg);

  p.axes = {"seed", "optimizer"};
  p.columns = {"initial_loss", "final_loss", "plateau_flagged", "plateau_start", "plateau_end", "plateau_duration"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const auto run_seed = cell["seed"].get<std::uint64_t>();
    const std::string opt_name = cell["optimizer"].get<std::string>();
    // Keyed by the run seed, not the cell, so both optimizers start from the same network.
    const LinearRNN rnn0 = random_rnn(init, seed * 0x9e3779b97f4a7c15ULL + run_seed);
    TrainOptions opt = base;
    opt.optimizer = opt_name == "gd" ? Optimizer::GD : Optimizer::HeavyBall;
    opt.lr = opt_name == "gd" ? lr_gd : lr_hb;
    const TrainRecord rec = gd_train(rnn0, kernel, opt);
    const PlateauReport& pl = rec.plateau;
    CellOutput o;
    o.rows.push_back({rec.loss.front(), rec.loss.back(), static_cast<long long>(pl.flagged),
                      static_cast<long long>(pl.start), static_cast<long long>(pl.end),
                      static_cast<long long>(pl.duration)});
    o.files.push_back({"training_" + opt_name + "_seed" + std::to_string(run_seed) + ".csv", training_table(rec)});
    o.info = {{"optimizer", opt_name}, {"flagged", pl.flagged}, {"duration", pl.duration}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) {
    std::map<std::string, std::vector<double>> durations;
    std::map<std::string, int> flagged, runs;
    for (const auto& o : out) {
      if (!o) continue;
      const std::string name = o->info["optimizer"];
      durations[name].push_back(o->info["duration"].get<double>());
      flagged[name] += o->info["flagged"].get<bool>();
      ++runs[name];
    }
    Json s = Json::object();
    for (const auto& [name, d] : durations)
      s[name] = {{"runs", runs[name]}, {"plateau_flagged", flagged[name]}, {"median_plateau_duration", median(d)}};
    if (durations.count("gd") && durations.count("heavy-ball"))
      s["heavy_ball_median_shorter"] = median(durations["heavy-ball"]) < median(durations["gd"]);
    return s;
  };
  return p;
}

// ---------------------------------------------------------------- ito-check

Plan plan_ito(const Json& cfg) {
  Plan p;
  const Json& e = cfg["ensemble"];
  PathEnsemble base;
  base.n_paths = get_long(e, "n_paths", "ensemble");
  base.dt = get_double(e, "dt", "ensemble");
  base.horizon = get_double(e, "horizon", "ensemble");
  const int m = static_cast<int>(get_long(cfg["pair"], "m", "pair"));
  const int m_star = static_cast<int>(get_long(cfg["pair"], "m_star", "pair"));
  if (m < 1 || m_star < 1) throw ConfigError("field 'pair': widths must be positive");
  const std::uint64_t seed = config_seed(cfg);

  p.axes = {"seed"};
  p.columns = {"mc_mean", "std_error", "closed_form", "abs_diff", "band", "within"};
  p.cells = product(cfg["sweep"], p.axes);
  p.run = [=](const Json& cell, std::uint64_t) {
    const auto run_seed = cell["seed"].get<std::uint64_t>();
    const std::uint64_t key = seed * 0x9e3779b97f4a7c15ULL + run_seed;
    RnnInit init;
    init.m = m;
    init.decay_lo = 0.5;
    init.decay_hi = 2.0;
    init.dt = base.dt;
    const LinearRNN rnn = random_rnn(init, key);
    CounterRng rng(key, 0xfeedULL);
    std::uniform_real_distribution<double> rate(0.5, 3.0);
    std::normal_distribution<double> coef(0.0, 1.0);
    Vec a(m_star), w(m_star);
    for (int i = 0; i < m_star; ++i) {
      a(i) = coef(rng);
      w(i) = rate(rng);
    }
    const MemoryKernel target = ExpSumKernel(a, w);
    PathEnsemble ens = base;
    ens.seed = key;
    const McEstimate mc = mc_loss(rnn, target, ens);
    const double cf = closedform_finite_loss(rnn, target, ens.horizon);
    const double diff = std::abs(mc.mean - cf), band = 3.0 * mc.std_error + 5.0 * ens.dt;
    CellOutput o;
    o.rows.push_back({mc.mean, mc.std_error, cf, diff, band, static_cast<long long>(diff <= band)});
    o.info = {{"within", diff <= band}};
    return o;
  };
  p.summarize = [](const std::vector<Json>&, const Outputs& out) {
    int within = 0, n = 0;
    for (const auto& o : out)
      if (o) {
        ++n;
        within += o->info["within"].get<bool>();
      }
    return Json{{"pairs", n}, {"within_band", within}, {"all_within", n > 0 && within == n}};
  };
  return p;
}

Plan make_plan(const Json& cfg) {
  const std::string exp = cfg.at("experiment");
  if (exp == "loss-check") return plan_loss_check(cfg);
  if (exp == "flow") return plan_flow(cfg);
  if (exp == "escape-sweep") return plan_escape(cfg);
  if (exp == "plateau-2d") return plan_plateau_2d(cfg);
  if (exp == "landscape-enum") return cfg["mode"] == "enumerate" ? plan_enumerate(cfg) : plan_classify(cfg);
  if (exp == "rate-sweep") return plan_rate(cfg);
  if (exp == "min-width") return plan_min_width(cfg);
  if (exp == "quadratic-escape") return plan_quadratic(cfg);
  if (exp == "rnn-train") return plan_rnn_train(cfg);
  if (exp == "ito-check") return plan_ito(cfg);
  throw ConfigError("field 'experiment': unknown experiment '" + exp + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

const std::vector<CatalogEntry>& catalog() {
  static const std::vector<CatalogEntry> c = {
      {"loss-check", "closed-form loss, gradient and Hessian; small-gradient decay on M* under an omega sweep"},
      {"flow", "gradient-flow and heavy-ball trajectories with hitting times (memory-plateau sweep curves)"},
      {"escape-sweep", "escape time versus memory 1/omega from M* (timescale figure, exponential escape theorem)"},
      {"plateau-2d", "two-rate symmetric flow, plateau length Theta(ln 1/delta)"},
      {"landscape-enum", "coincided critical affine spaces, Stirling counts, Hessian rank, 2D saddle classification"},
      {"rate-sweep", "L1 approximation error versus width m, rate C(alpha) gamma / (beta m^alpha)"},
      {"min-width", "curse of memory in width, m_min(omega, eps) for power-law targets"},
      {"quadratic-escape", "GD versus momentum escape from a quadratic saddle"},
      {"rnn-train", "full-matrix linear RNN training plateaus, GD versus heavy-ball (general-cases figure)"},
      {"ito-check", "white-noise Monte Carlo loss versus closed-form kernel loss (Ito isometry)"},
  };
  return c;
}

ExperimentResult run_experiment(const Json& cfg, int workers) {
  const Plan plan = make_plan(cfg);
  const size_t n = plan.cells.size();
  Outputs outputs(n);
  std::vector<std::string> errors(n);

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        outputs[i] = plan.run(plan.cells[i], static_cast<std::uint64_t>(i));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int k = 1; k < w; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  ExperimentResult res;
  res.total_cells = static_cast<int>(n);
  res.table.columns = plan.axes;
  res.table.columns.insert(res.table.columns.end(), plan.columns.begin(), plan.columns.end());
  res.table.columns.push_back("error");
  Json cell_errors = Json::array();
  std::map<std::string, CsvTable> merged;
  for (size_t i = 0; i < n; ++i) {
    std::vector<CsvCell> lead;
    for (const auto& a : plan.axes) lead.push_back(json_cell(plan.cells[i][a]));
    if (!outputs[i]) {
      ++res.failed_cells;
      auto row = lead;
      row.resize(res.table.columns.size() - 1);
      row.emplace_back(errors[i]);
      res.table.add(std::move(row));
      cell_errors.push_back({{"cell", i}, {"axes", plan.cells[i]}, {"error", errors[i]}});
      continue;
    }
    for (const auto& r : outputs[i]->rows) {
      auto row = lead;
      row.insert(row.end(), r.begin(), r.end());
      row.emplace_back(std::string());
      res.table.add(std::move(row));
    }
    // Files with the same name from different cells are concatenated in cell order.
    for (const auto& f : outputs[i]->files) {
      auto [it, fresh] = merged.try_emplace(f.file, f.table);
      if (!fresh)
        for (const auto& r : f.table.rows) it->second.add(r);
    }
    for (const auto& j : outputs[i]->jsons) res.extra_json.push_back(j);
  }
  for (auto& [name, t] : merged) res.extra_csv.push_back({name, std::move(t)});

  res.summary = plan.summarize(plan.cells, outputs);
  res.summary["experiment"] = cfg["experiment"];
  res.summary["cells"] = {{"total", res.total_cells}, {"failed", res.failed_cells}};
  res.summary["cell_errors"] = cell_errors;
  return res;
}

void write_result(const std::string& out_dir, const Json& resolved, const ExperimentResult& result) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_csv_file((dir / "results.csv").string(), result.table);
  Json summary = result.summary;
  summary["timestamp"] = utc_timestamp();
  write_json_file((dir / "summary.json").string(), summary);
  write_json_file((dir / "resolved_config.json").string(), resolved);
  for (const auto& f : result.extra_csv) write_csv_file((dir / f.file).string(), f.table);
  for (const auto& [name, j] : result.extra_json) write_json_file((dir / name).string(), j);
}

}  // namespace memlab::cli
