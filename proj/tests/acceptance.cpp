// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "experiments.hpp"

using namespace memlab;
using namespace memlab::cli;

namespace {

const int kWorkers = static_cast<int>(std::max(2u, std::thread::hardware_concurrency()));

struct Run {
  Json cfg;
  ExperimentResult res;
};

std::map<std::string, Run> cache;

const Run& run(const std::string& name) {
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  Json cfg = resolve_config(load_config(std::string(MEMLAB_CONFIG_DIR) + "/" + name + ".json"));
  ExperimentResult res = run_experiment(cfg, kWorkers);
  return cache.emplace(name, Run{std::move(cfg), std::move(res)}).first->second;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s C%d %s: %s; %.1fs of %.0fs budget%s\n", pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
              secs, budget_s, in_time ? "" : " (over budget)");
  std::fflush(stdout);
}

double slope_of(const Json& fit) { return fit.at("slope").get<double>(); }
double r2_of(const Json& fit) { return fit.at("r2").get<double>(); }

// ---------------------------------------------------------------- C1 oracles

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

Outcome closed_form_check() {
  std::mt19937_64 g(20240601);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.3, 3.0);
  std::uniform_int_distribution<int> width(1, 6);
  double worst_loss = 0, worst_grad = 0, worst_hess = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int m = width(g), ms = width(g);
    Vec a(m), w(m), as(ms), ws(ms);
    for (int i = 0; i < m; ++i) a(i) = nd(g), w(i) = ud(g);
    for (int i = 0; i < ms; ++i) as(i) = nd(g), ws(i) = ud(g);
    const Model model(a, w);
    const MemoryKernel k = ExpSumKernel(as, ws);
    const double want = simpson(
        [&](double t) {
          const double r = model(t) - eval(k, t);
          return r * r;
        },
        0.0, 80.0, 400000);
    worst_loss = std::max(worst_loss, std::abs(loss(model, k) - want) / want);

    const Vec th = model.theta();
    const Vec gr = grad(model, k);
    const Mat H = hessian(model, k);
    Vec gf(2 * m);
    Mat Hf(2 * m, 2 * m);
    for (int i = 0; i < 2 * m; ++i) {
      Vec p = th, q = th;
      p(i) += 1e-6;
      q(i) -= 1e-6;
      gf(i) = (loss(Model::from_theta(p), k) - loss(Model::from_theta(q), k)) / 2e-6;
      p = th, q = th;
      p(i) += 1e-5;
      q(i) -= 1e-5;
      Hf.col(i) = (grad(Model::from_theta(p), k) - grad(Model::from_theta(q), k)) / 2e-5;
    }
    worst_grad = std::max(worst_grad, (gr - gf).norm() / gf.norm());
    worst_hess = std::max(worst_hess, (H - Hf).norm() / Hf.norm());
  }
  return {worst_loss <= 1e-9 && worst_grad <= 1e-4 && worst_hess <= 1e-3,
          "100 instances, worst rel errors loss " + fmt(worst_loss) + " (<= 1e-9), grad " + fmt(worst_grad) +
              " (<= 1e-4), hessian " + fmt(worst_hess) + " (<= 1e-3)"};
}

// Surjections from an m-set onto a d-set, counted by labeling every map.
std::uint64_t brute_surjections(int m, int d) {
  std::uint64_t total = 1, count = 0;
  for (int i = 0; i < m; ++i) total *= static_cast<std::uint64_t>(d);
  for (std::uint64_t code = 0; code < total; ++code) {
    std::uint64_t hit = 0, c = code;
    for (int i = 0; i < m; ++i, c /= d) hit |= std::uint64_t(1) << (c % d);
    count += hit == (std::uint64_t(1) << d) - 1;
  }
  return count;
}

std::string csv_bytes(const ExperimentResult& r) {
  std::ostringstream os;
  write_csv(os, r.table);
  for (const auto& [name, t] : r.extra_csv) {
    os << "# " << name << "\n";
    write_csv(os, t);
  }
  for (const auto& [name, j] : r.extra_json) os << "# " << name << "\n" << j.dump() << "\n";
  os << r.summary.dump();
  return os.str();
}

}  // namespace

int main() {
  std::printf("acceptance run with %d workers\n", kWorkers);

  criterion(1, "closed-form correctness", 60, closed_form_check);

  criterion(2, "regression value", 60, [] {
    const Json& s = run("loss_regression").res.summary;
    const double l = s["loss"].get<double>();
    const auto gv = s["grad"].get<std::vector<double>>();
    const bool ok = std::abs(l - 1.0 / 6.0) <= 1e-9 && std::abs(gv[0] + 1.0 / 3.0) <= 1e-8 &&
                    std::abs(gv[1] + 1.0 / 18.0) <= 1e-8;
    return Outcome{ok, "loss " + fmt(l) + ", grad (" + fmt(gv[0]) + ", " + fmt(gv[1]) + ")"};
  });

  criterion(3, "2D plateau law", 300, [] {
    const Run& r = run("plateau_2d");
    const Json& s = r.res.summary;
    const Json& fit = s["fit_t_plateau_vs_log_inv_delta"];
    const double v = s["v_limit"].get<double>();
    const bool root = std::abs(poly_eval(quartic_p({1.0, 2.0}), v)) <= 1e-8;
    const double rel = s["slope_rel_error"].get<double>();
    const bool ok = r.res.failed_cells == 0 && root && r2_of(fit) >= 0.99 && rel <= 0.10;
    return Outcome{ok, "xi = 10 delta, slope " + fmt(slope_of(fit)) + " vs 1/W(v_limit) " +
                           fmt(s["predicted_slope"].get<double>()) + " (rel error " + fmt(rel) + ", <= 0.10), R2 " +
                           fmt(r2_of(fit)) + ", v_limit " + fmt(v) + (root ? " is a quartic root" : " NOT a root")};
  });
  {
    const Json& s = run("plateau_2d_fixed_xi").res.summary;
    std::printf("info C3 fixed xi = 1e-3: slope %s vs 1/W %s (rel error %s)\n",
                fmt(slope_of(s["fit_t_plateau_vs_log_inv_delta"])).c_str(),
                fmt(s["predicted_slope"].get<double>()).c_str(), fmt(s["slope_rel_error"].get<double>()).c_str());
  }

  criterion(4, "exponential escape", 1800, [] {
    const Run& r = run("escape_sweep");
    const Json& s = r.res.summary;
    if (!s.contains("fit_log_tau0_loss_vs_inv_omega")) return Outcome{false, "fewer than two loss hits"};
    const Json& fit = s["fit_log_tau0_loss_vs_inv_omega"];
    const bool below = s["predictions_below_measured"].get<bool>();
    const bool ok = r.res.failed_cells == 0 && r2_of(fit) >= 0.99 && slope_of(fit) > 0 && below &&
                    s["cells_with_loss_hit"].get<int>() == r.res.total_cells;
    return Outcome{ok, "log tau0_loss vs 1/omega slope " + fmt(slope_of(fit)) + ", R2 " + fmt(r2_of(fit)) +
                           ", prediction <= measured in every cell: " + (below ? "yes" : "no")};
  });

  criterion(5, "small gradient on M*", 60, [] {
    const Json& s = run("small_gradient").res.summary;
    const Json& fit = s["fit_log_grad_norm_vs_inv_omega"];
    const double rel = s["slope_rel_error"].get<double>();
    return Outcome{rel <= 0.15, "slope " + fmt(slope_of(fit)) + " vs -w_min " + fmt(s["expected_slope"].get<double>()) +
                                    " (rel error " + fmt(rel) + ", <= 0.15)"};
  });

  criterion(6, "Hessian degeneracy", 300, [] {
    const Run& r = run("landscape_enum");
    const Json& s = r.res.summary;
    std::uint64_t brute3 = 0;
    for (int d = 1; d <= 3; ++d) brute3 += brute_surjections(3, d);
    long long enumerated3 = -1;
    double max_grad = 0;
    for (const auto& pm : s["per_m"]) {
      if (pm["m"] == 3) enumerated3 = pm["enumerated"].get<long long>();
      max_grad = std::max(max_grad, pm["max_grad_norm"].get<double>());
    }
    const bool ok = r.res.failed_cells == 0 && s["per_m"].size() == 5 && s["all_spaces_ok"].get<bool>() &&
                    s["counts_match"].get<bool>() && brute3 == 13 && enumerated3 == 13 && max_grad <= 1e-7;
    return Outcome{ok, "m = 1..5, every space within rank and zero-count bounds: " +
                           std::string(s["all_spaces_ok"].get<bool>() ? "yes" : "no") + ", max grad norm " +
                           fmt(max_grad) + ", m = 3 count " + std::to_string(enumerated3) + " (brute force " +
                           std::to_string(brute3) + ")"};
  });

  criterion(7, "2D classification", 60, [] {
    std::string detail;
    bool ok = true;
    for (const char* name : {"classify_opposite", "classify_same"}) {
      const Run& r = run(name);
      const Json& s = r.res.summary;
      const auto rates = r.cfg["kernel"]["rates"].get<std::vector<double>>();
      const auto coeffs = r.cfg["kernel"]["coeffs"].get<std::vector<double>>();
      const bool regime = coeffs[0] * coeffs[1] < 0 || rates[1] / rates[0] < 2 + std::sqrt(3.0);
      const bool this_ok = r.res.failed_cells == 0 && regime && r.res.table.rows.size() == 101 &&
                           s["pattern_ok"].get<bool>();
      ok = ok && this_ok;
      detail += std::string(detail.empty() ? "" : "; ") + name + " mismatches " + s["mismatches"].dump() +
                ", stray indeterminate " + s["indeterminate_off_boundary"].dump();
    }
    return Outcome{ok, detail};
  });

  criterion(8, "approximation rate", 120, [] {
    const Json& fit = run("rate_sweep").res.summary["fit_log_l1_vs_log_m"];
    const double sl = slope_of(fit);
    return Outcome{sl >= -1.15 && sl <= -0.85, "slope " + fmt(sl) + " in [-1.15, -0.85]"};
  });

  criterion(9, "curse of memory in width", 600, [] {
    const Json& e = run("min_width").res.summary["per_eps"][0];
    std::string ms;
    for (const auto& m : e["m_min"]) ms += (ms.empty() ? "" : ", ") + (m.is_null() ? std::string("> cap") : m.dump());
    const bool ok = e["nondecreasing"].get<bool>() && e["strict_increase"].get<bool>();
    return Outcome{ok, "eps " + fmt(e["eps"].get<double>()) + ", m_min for omega 1.0, 0.75, 0.5: " + ms};
  });

  criterion(10, "quadratic escape formulas", 60, [] {
    const Json& s = run("quadratic_escape").res.summary;
    const double gd = s["max_rel_error"]["gd"].get<double>(), mo = s["max_rel_error"]["momentum"].get<double>();
    const bool grows = s["ratio_grows_as_eps_shrinks"].get<bool>();
    return Outcome{gd <= 0.15 && mo <= 0.15 && grows, "worst rel error gd " + fmt(gd) + ", momentum " + fmt(mo) +
                                                          " (<= 0.15), ratio grows: " + (grows ? "yes" : "no")};
  });

  criterion(11, "Ito isometry", 300, [] {
    const Json& s = run("ito_check").res.summary;
    const bool ok = s["pairs"] == 5 && s["all_within"].get<bool>();
    return Outcome{ok, s["within_band"].dump() + "/" + s["pairs"].dump() + " pairs within 3 se + 5 dt"};
  });

  criterion(12, "full-matrix plateauing", 1800, [] {
    const Json& s = run("rnn_train").res.summary;
    const int flagged = s["gd"]["plateau_flagged"].get<int>();
    const bool shorter = s["heavy_ball_median_shorter"].get<bool>();
    return Outcome{flagged >= 8 && shorter,
                   "gd flagged " + std::to_string(flagged) + "/" + s["gd"]["runs"].dump() + " (>= 8), median duration gd " +
                       fmt(s["gd"]["median_plateau_duration"].get<double>()) + " vs heavy-ball " +
                       fmt(s["heavy-ball"]["median_plateau_duration"].get<double>())};
  });

  criterion(13, "determinism", 3600, [] {
    int same = 0, total = 0;
    std::string differing;
    for (auto& [name, r] : cache) {
      // A second run, serial where that is cheap, must reproduce every byte.
      const bool heavy = name == "rnn_train" || name == "escape_sweep" || name == "min_width";
      const ExperimentResult again = run_experiment(r.cfg, heavy ? 3 : 1);
      ++total;
      if (csv_bytes(again) == csv_bytes(r.res)) ++same;
      else differing += " " + name;
    }
    return Outcome{same == total, std::to_string(same) + "/" + std::to_string(total) +
                                      " configs identical across reruns at a different worker count" +
                                      (differing.empty() ? "" : "; differing:" + differing)};
  });

  std::printf("%d of 13 criteria failed\n", failures);
  return failures;
}
