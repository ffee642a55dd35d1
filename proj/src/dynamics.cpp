#include <cmath>
#include <limits>

#include "memlab/dynamics.hpp"

namespace memlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double theta_loss(const Vec& theta, long dim, const MemoryKernel& target, double norm_sq) {
  const long m = dim / 2;
  return loss_raw(theta.head(m), theta.segment(m, m), target, norm_sq);
}

Vec theta_grad(const Vec& theta, long dim, const MemoryKernel& target) {
  const long m = dim / 2;
  Vec g(dim);
  grad_raw(theta.head(m), theta.segment(m, m), target, g);
  return g;
}

// Shared driver: integrates `rhs` on a state whose first `dim` entries are theta and fills
// the trajectory bookkeeping common to first- and second-order flows.
FlowTrajectory run_flow(const FlowConfig& cfg, const OdeRhs& rhs, const Vec& y0, long dim) {
  FlowTrajectory tr;
  tr.target = cfg.target;
  tr.theta_dim = dim;
  tr.theta0 = y0.head(dim);
  tr.target_norm_sq = l2_norm_sq(cfg.target);
  tr.loss0 = theta_loss(tr.theta0, dim, cfg.target, tr.target_norm_sq);

  const long m = dim / 2;
  const Vec th0 = tr.theta0;
  const double j0 = tr.loss0, nsq = tr.target_norm_sq, delta = cfg.delta, w_floor = cfg.w_floor;
  const MemoryKernel& target = cfg.target;

  std::vector<OdeEvent> events(3);
  events[0].g = [th0, dim, delta](double, const Vec& y) { return (y.head(dim) - th0).norm() - delta; };
  events[1].g = [&target, dim, j0, nsq, delta](double, const Vec& y) {
    return std::abs(theta_loss(y, dim, target, nsq) - j0) - delta;
  };
  events[1].terminal = cfg.stop_at_loss_hit;
  events[2].g = [m, w_floor](double, const Vec& y) { return y.segment(m, m).minCoeff() - w_floor; };
  events[2].terminal = true;

  OdeOptions opt;
  opt.method = cfg.method;
  opt.rtol = cfg.rtol;
  opt.atol = cfg.atol;
  opt.h_fixed = cfg.h_fixed;
  opt.keep_dense = cfg.record_stride <= 0.0;
  opt.record_stride = cfg.record_stride;
  opt.admissible = [m, w_floor](const Vec& y) { return y.segment(m, m).minCoeff() > 0.5 * w_floor; };

  tr.ode = solve_ode(rhs, y0, cfg.tau_max, events, opt);
  for (const auto& e : tr.ode.events) {
    if (e.index == 0) tr.events.tau0_param = e.t;
    if (e.index == 1) tr.events.tau0_loss = e.t;
    if (e.index == 2)
      throw WFloorHit("gradient flow: a rate reached the floor at tau = " + std::to_string(e.t) +
                      "; tighten the integrator tolerance");
  }

  tr.loss_series.reserve(tr.ode.states.size());
  tr.grad_norm_series.reserve(tr.ode.states.size());
  for (const Vec& y : tr.ode.states) {
    tr.loss_series.push_back(theta_loss(y, dim, target, nsq));
    tr.grad_norm_series.push_back(theta_grad(y, dim, target).norm());
  }
  return tr;
}

// First sign change of g from negative to non-negative after t_start, on the dense output.
std::optional<double> crossing_after(const OdeSolution& sol, const std::function<double(double, const Vec&)>& g,
                                     double t_start, double t_tol) {
  double t_prev = t_start;
  if (g(t_start, sol.at(t_start)) >= 0) return t_start;
  for (size_t k = 0; k < sol.knots.size(); ++k) {
    const double t = sol.knots[k];
    if (t <= t_start) continue;
    if (g(t, sol.states[k]) >= 0) {
      double lo = t_prev, hi = t;
      while (hi - lo > t_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (g(mid, sol.at(mid)) >= 0) hi = mid;
        else lo = mid;
      }
      return hi;
    }
    t_prev = t;
  }
  return std::nullopt;
}

}  // namespace

double FlowTrajectory::loss_at(double tau) const { return theta_loss(theta_at(tau), theta_dim, target, target_norm_sq); }

FlowTrajectory gradient_flow(const FlowConfig& cfg) {
  const long dim = 2 * cfg.init.m();
  const MemoryKernel& target = cfg.target;
  OdeRhs rhs = [&target, dim](double, const Vec& y, Vec& dy) {
    dy.resize(dim);
    const long m = dim / 2;
    grad_raw(y.head(m), y.tail(m), target, dy);
    dy = -dy;
  };
  return run_flow(cfg, rhs, cfg.init.theta(), dim);
}

FlowTrajectory heavy_ball_flow(const FlowConfig& cfg, double rho, double eta) {
  if (!(rho >= 0) || !(eta > 0)) throw DomainError("heavy_ball_flow: need rho >= 0 and eta > 0");
  const long dim = 2 * cfg.init.m();
  const long m = dim / 2;
  const MemoryKernel& target = cfg.target;
  const double sq = std::sqrt(eta);
  if (rho == 0.0) {
    OdeRhs rhs = [&target, dim, m, sq](double, const Vec& y, Vec& dy) {
      dy.resize(dim);
      grad_raw(y.head(m), y.tail(m), target, dy);
      dy *= -sq;
    };
    return run_flow(cfg, rhs, cfg.init.theta(), dim);
  }
  const double damp = (1.0 - rho) / sq;
  OdeRhs rhs = [&target, dim, m, rho, damp](double, const Vec& y, Vec& dy) {
    dy.resize(2 * dim);
    Vec g(dim);
    grad_raw(y.head(m), y.segment(m, m), target, g);
    dy.head(dim) = y.tail(dim);
    dy.tail(dim) = -(damp * y.tail(dim) + g) / rho;
  };
  Vec y0(2 * dim);
  y0.head(dim) = cfg.init.theta();
  y0.tail(dim) = -sq * grad(cfg.init, target);
  return run_flow(cfg, rhs, y0, dim);
}

HittingTimes hitting_times(const FlowTrajectory& traj, double delta) {
  HittingTimes h;
  if (traj.ode.knots.size() < 2) return h;
  const long dim = traj.theta_dim;
  const Vec th0 = traj.theta0;
  const double tol = 1e-9 * traj.ode.t_end();
  h.tau0_param = first_crossing(
      traj.ode, [&](double, const Vec& y) { return (y.head(dim) - th0).norm() - delta; }, tol);
  h.tau0_loss = first_crossing(
      traj.ode,
      [&](double, const Vec& y) {
        return std::abs(theta_loss(y, dim, traj.target, traj.target_norm_sq) - traj.loss0) - delta;
      },
      tol);
  return h;
}

EscapePrediction linearized_escape_prediction(const Model& theta0, const MemoryKernel& target, double delta) {
  EscapePrediction p;
  const Vec g = grad(theta0, target);
  const auto eig = sym_eig(hessian(theta0, target));
  p.grad_norm = g.norm();
  p.eigenvalues = eig.eigenvalues;
  p.lambda_min = eig.eigenvalues(eig.eigenvalues.size() - 1);
  p.mode_projections = eig.eigenvectors.transpose() * g;
  if (p.grad_norm == 0.0) {
    p.tau = kInf;
    return p;
  }
  const double linear = delta / (2.0 * p.grad_norm);
  if (p.lambda_min < 0) {
    const double lam = -p.lambda_min;
    p.tau = std::min(linear, std::log1p(delta * lam / (2.0 * p.grad_norm)) / lam);
  } else {
    p.tau = linear;
  }
  return p;
}

// ---------------------------------------------------------------- two-rate symmetric case

double loss_2d(double w1, double w2, const std::pair<double, double>& ws) {
  const auto [c1, c2] = ws;
  auto cross = [&](double w) { return 1.0 / (w + c1) + 1.0 / (w + c2); };
  return 1.0 / (2 * w1) + 1.0 / (2 * w2) + 2.0 / (w1 + w2) - 2.0 * (cross(w1) + cross(w2)) + 1.0 / (2 * c1) +
         1.0 / (2 * c2) + 2.0 / (c1 + c2);
}

double flow_1d_rhs(double v, const std::pair<double, double>& ws) {
  const auto [c1, c2] = ws;
  return 1.0 / (v * v) - 2.0 / ((v + c1) * (v + c1)) - 2.0 / ((v + c2) * (v + c2));
}

Vec quartic_p(const std::pair<double, double>& ws) {
  const auto [c1, c2] = ws;
  Vec l1(2), l2(2), v2(3);
  l1 << c1, 1.0;
  l2 << c2, 1.0;
  v2 << 0.0, 0.0, 2.0;
  const Vec s1 = poly_mul(l1, l1), s2 = poly_mul(l2, l2);
  const Vec lhs = poly_mul(s1, s2);
  const Vec rhs = poly_mul(v2, s1 + s2);
  return lhs - rhs;
}

double gap_rate(double w, const std::pair<double, double>& ws) {
  const auto [c1, c2] = ws;
  return -1.0 / (w * w * w) + 4.0 / std::pow(w + c1, 3) + 4.0 / std::pow(w + c2, 3);
}

Plateau2dResult flow_2d_symmetric(const std::pair<double, double>& ws, double xi, double delta, double tau_max,
                                  const Plateau2dOptions& opt) {
  const auto [c1, c2] = ws;
  if (!(c1 > 0) || !(c2 > c1)) throw DomainError("flow_2d_symmetric: need 0 < w1* < w2*");
  if (!(xi > 0) || !(delta >= 0)) throw DomainError("flow_2d_symmetric: need xi > 0 and delta >= 0");

  Plateau2dResult res;
  const double u0 = xi + 0.5 * delta;

  // The 1D flow is monotone, so it settles on the nearest stable root in the direction of v'(u0).
  const auto roots = positive_real_roots(quartic_p(ws));
  const bool up = flow_1d_rhs(u0, ws) > 0;
  double v_lim = std::numeric_limits<double>::quiet_NaN();
  for (double r : roots) {
    if (up && r > u0 && !(r >= v_lim)) v_lim = r;
    if (!up && r < u0 && !(r <= v_lim)) v_lim = r;
  }
  if (std::isnan(v_lim)) throw DomainError("flow_2d_symmetric: no positive root reachable from the initial point");
  res.v_limit = v_lim;
  res.gap_rate_at_limit = gap_rate(v_lim, ws);

  auto f = [c1 = c1, c2 = c2](double a, double b) {
    return 1.0 / (2 * a * a) - 2.0 / ((a + c1) * (a + c1)) - 2.0 / ((a + c2) * (a + c2)) + 2.0 / ((a + b) * (a + b));
  };
  OdeRhs rhs = [f, c1 = c1, c2 = c2](double, const Vec& y, Vec& dy) {
    const double u = y(0), g = y(1);
    const double w1 = u - 0.5 * g, w2 = u + 0.5 * g;
    double rate = -(w1 + w2) / (2 * w1 * w1 * w2 * w2);
    for (double c : {c1, c2}) rate += 2.0 * (w1 + w2 + 2 * c) / ((w1 + c) * (w1 + c) * (w2 + c) * (w2 + c));
    dy.resize(2);
    dy(0) = 0.5 * (f(w1, w2) + f(w2, w1));
    dy(1) = g * rate;
  };

  const double eps_sep = opt.eps_sep;
  std::vector<OdeEvent> events(2);
  events[0].g = [eps_sep](double, const Vec& y) { return std::abs(y(1)) - eps_sep; };
  events[1].g = [stop = std::max(0.5, 2 * eps_sep)](double, const Vec& y) { return std::abs(y(1)) - stop; };
  events[1].terminal = true;

  OdeOptions o;
  o.rtol = opt.rtol;
  o.atol = opt.atol;
  o.admissible = [](const Vec& y) { return y(0) - 0.5 * std::abs(y(1)) > 0; };
  Vec y0(2);
  y0 << u0, delta;
  res.ode = solve_ode(rhs, y0, tau_max, events, o);
  for (const auto& e : res.ode.events)
    if (e.index == 0) res.t_separation = e.t;

  const double t_tol = 1e-9 * res.ode.t_end();
  const double reach = opt.reach_tol, eps_loss = opt.eps_loss;
  res.t_reach = crossing_after(
      res.ode, [&](double, const Vec& y) { return reach - std::abs(y(0) - v_lim); }, 0.0, t_tol);
  if (res.t_reach) {
    res.t_plateau = crossing_after(
        res.ode,
        [&](double, const Vec& y) {
          const double u = y(0), g = y(1);
          return std::abs(loss_2d(u - 0.5 * g, u + 0.5 * g, ws) - loss_2d(u, u, ws)) - eps_loss;
        },
        *res.t_reach, t_tol);
  }
  return res;
}

// ---------------------------------------------------------------- quadratic momentum example

QuadraticEscape quadratic_escape(double eps, double delta_init, double delta0, EscapeMethod method) {
  if (!(eps > 0) || !(delta0 > 0)) throw DomainError("quadratic_escape: eps and delta0 must be positive");
  QuadraticEscape q;
  q.threshold = -0.5 * delta0;
  auto f = [eps](double x1, double x2) { return 0.5 * (x1 * x1 - eps * x2 * x2); };

  OdeRhs rhs;
  Vec y0;
  if (method == EscapeMethod::GradientFlow) {
    q.formula = std::log(delta0 / eps) / (2 * eps);
    rhs = [eps](double, const Vec& y, Vec& dy) {
      dy.resize(2);
      dy << -y(0), eps * y(1);
    };
    y0 = Vec(2);
    y0 << delta_init, 1.0;
  } else {
    // rho = 1, eta = 1: x'' = -grad f, x'(0) = -grad f(x(0)).
    q.formula = std::log(4 * delta0 / eps) / (2 * std::sqrt(eps));
    rhs = [eps](double, const Vec& y, Vec& dy) {
      dy.resize(4);
      dy << y(2), y(3), -y(0), eps * y(1);
    };
    y0 = Vec(4);
    y0 << delta_init, 1.0, -delta_init, eps;
  }

  std::vector<OdeEvent> ev(1);
  ev[0].g = [f, thr = q.threshold](double, const Vec& y) { return f(y(0), y(1)) - thr; };
  ev[0].terminal = true;
  if (f(y0(0), y0(1)) <= q.threshold) return q;

  OdeOptions o;
  o.rtol = 1e-11;
  o.atol = 1e-14;
  const double t_max = std::max(100.0, 20.0 * q.formula);
  const auto sol = solve_ode(rhs, y0, t_max, ev, o);
  q.measured = sol.events.empty() ? kInf : sol.events.front().t;
  return q;
}

// ---------------------------------------------------------------- plateau detection and export

PlateauReport detect_plateau(const std::vector<double>& loss, const PlateauCriteria& c) {
  PlateauReport rep;
  const size_t n = loss.size();
  rep.samples = n;
  if (n < 3) return rep;
  for (double v : loss)
    if (!std::isfinite(v)) return rep;

  // Sparse table for range minima.
  std::vector<std::vector<double>> tbl{loss};
  for (size_t k = 1; (size_t(1) << k) <= n; ++k) {
    const auto& prev = tbl.back();
    std::vector<double> cur(n - (size_t(1) << k) + 1);
    for (size_t i = 0; i < cur.size(); ++i) cur[i] = std::min(prev[i], prev[i + (size_t(1) << (k - 1))]);
    tbl.push_back(std::move(cur));
  }
  auto range_min = [&](size_t lo, size_t hi) {  // inclusive
    size_t k = 0;
    while ((size_t(2) << k) <= hi - lo + 1) ++k;
    return std::min(tbl[k][lo], tbl[k][hi - (size_t(1) << k) + 1]);
  };
  std::vector<double> suffix_min(n);
  suffix_min[n - 1] = loss[n - 1];
  for (size_t i = n - 1; i-- > 0;) suffix_min[i] = std::min(loss[i], suffix_min[i + 1]);

  const size_t min_len = static_cast<size_t>(std::ceil(c.min_fraction * static_cast<double>(n)));
  size_t best_any = 0, best_any_i = 0, best_flag = 0, best_flag_i = 0;
  bool any_flag = false;
  for (size_t i = 0; i + 1 < n; ++i) {
    if (loss[0] - loss[i] < c.bracket_drop * loss[0]) continue;
    const double thr = (1.0 - c.flat_tol) * loss[i];
    // First index after i at or below thr; n when the loss never drops that far.
    size_t end = n;
    if (suffix_min[i + 1] <= thr) {
      size_t lo = i + 1, hi = n - 1;
      while (lo < hi) {
        const size_t mid = lo + (hi - lo) / 2;
        if (range_min(i + 1, mid) <= thr) hi = mid;
        else lo = mid + 1;
      }
      end = lo;
    }
    const size_t len = end - i;
    if (len > best_any) {
      best_any = len;
      best_any_i = i;
    }
    const bool bracketed = end < n && loss[i] - suffix_min[end] >= c.bracket_drop * loss[i];
    if (bracketed && len >= min_len && len > best_flag) {
      any_flag = true;
      best_flag = len;
      best_flag_i = i;
    }
  }
  rep.flagged = any_flag;
  rep.start = any_flag ? best_flag_i : best_any_i;
  rep.duration = any_flag ? best_flag : best_any;
  rep.end = rep.start + rep.duration;
  return rep;
}

std::vector<double> resample_loss(const FlowTrajectory& traj, size_t samples) {
  std::vector<double> out(samples);
  const double t_end = traj.ode.t_end();
  for (size_t k = 0; k < samples; ++k)
    out[k] = traj.loss_at(t_end * static_cast<double>(k) / static_cast<double>(samples - 1));
  return out;
}

CsvTable trajectory_table(const FlowTrajectory& traj, double stride) {
  CsvTable t;
  const long m = traj.m();
  t.columns = {"tau", "J", "grad_norm"};
  for (long i = 1; i <= m; ++i) t.columns.push_back("a_" + std::to_string(i));
  for (long i = 1; i <= m; ++i) t.columns.push_back("w_" + std::to_string(i));
  const double t_end = traj.ode.t_end();
  auto emit = [&](double tau) {
    const Vec th = traj.theta_at(tau);
    std::vector<CsvCell> row{tau, traj.loss_at(tau), theta_grad(th, traj.theta_dim, traj.target).norm()};
    for (long i = 0; i < 2 * m; ++i) row.emplace_back(th(i));
    t.add(std::move(row));
  };
  if (!(stride > 0)) {
    for (double tau : traj.ode.knots) emit(tau);
    return t;
  }
  long k = 0;
  for (double tau = 0.0; tau < t_end; tau = static_cast<double>(++k) * stride) emit(tau);
  emit(t_end);
  return t;
}

Json hitting_json(const HittingTimes& h) {
  Json j;
  j["tau0_param"] = h.tau0_param ? Json(*h.tau0_param) : Json(nullptr);
  j["tau0_loss"] = h.tau0_loss ? Json(*h.tau0_loss) : Json(nullptr);
  return j;
}

}  // namespace memlab
