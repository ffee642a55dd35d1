#include <cmath>
#include <limits>

#include "memlab/numerics.hpp"

namespace memlab {

Vec DenseStep::eval(double t) const {
  const double s = h == 0.0 ? 0.0 : (t - t0) / h;
  const double s1 = 1.0 - s;
  return r.col(0) + s * (r.col(1) + s1 * (r.col(2) + s * (r.col(3) + s1 * r.col(4))));
}

Vec OdeSolution::at(double t) const {
  if (steps.empty()) {
    // Piecewise-linear fallback over the recorded knots.
    if (t <= knots.front()) return states.front();
    if (t >= knots.back()) return states.back();
    auto it = std::upper_bound(knots.begin(), knots.end(), t);
    const size_t k = static_cast<size_t>(it - knots.begin());
    const double w = (t - knots[k - 1]) / (knots[k] - knots[k - 1]);
    return (1.0 - w) * states[k - 1] + w * states[k];
  }
  if (t <= steps.front().t0) return steps.front().eval(steps.front().t0);
  auto it = std::upper_bound(steps.begin(), steps.end(), t, [](double x, const DenseStep& s) { return x < s.t0; });
  const DenseStep& s = *(it - 1);
  return s.eval(std::min(t, s.t0 + s.h));
}

namespace {

// Dormand-Prince 5(4) tableau with the continuous extension of Hairer & Wanner.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

int sign_of(double x) { return x > 0 ? 1 : (x < 0 ? -1 : 0); }

class Driver {
 public:
  Driver(const OdeRhs& rhs, const std::vector<OdeEvent>& events, const OdeOptions& opt, double t_end, OdeSolution& sol)
      : rhs_(rhs), events_(events), opt_(opt), t_end_(t_end), sol_(sol),
        fired_(events.size(), false), g_prev_(events.size(), 0.0) {}

  void start(double t0, const Vec& y0) {
    sol_.knots.push_back(t0);
    sol_.states.push_back(y0);
    next_record_ = t0 + opt_.record_stride;
    for (size_t i = 0; i < events_.size(); ++i) g_prev_[i] = events_[i].g(t0, y0);
  }

  // Returns true when a terminal event stops the integration.
  bool accept(DenseStep&& step, double t1, const Vec& y1) {
    ++sol_.stats.accepted;
    bool stop = false;
    double t_stop = t1;
    for (size_t i = 0; i < events_.size(); ++i) {
      const double g1 = events_[i].g(t1, y1);
      const int sp = sign_of(g_prev_[i]), s1 = sign_of(g1);
      if (!fired_[i] && s1 != 0 && sp != s1) {
        double lo = step.t0, hi = t1;
        const double tol = 1e-9 * std::abs(t_end_);
        while (hi - lo > tol) {
          const double mid = 0.5 * (lo + hi);
          if (mid <= lo || mid >= hi) break;
          if (sign_of(events_[i].g(mid, step.eval(mid))) == s1) hi = mid;
          else lo = mid;
        }
        fired_[i] = true;
        sol_.events.push_back({static_cast<int>(i), hi, step.eval(hi)});
        if (events_[i].terminal) {
          stop = true;
          t_stop = std::min(t_stop, hi);
        }
      }
      g_prev_[i] = g1;
    }
    std::sort(sol_.events.begin(), sol_.events.end(), [](const EventHit& a, const EventHit& b) { return a.t < b.t; });

    const double t_rec = stop ? t_stop : t1;
    const Vec y_rec = stop ? step.eval(t_stop) : y1;
    if (opt_.keep_dense) {
      sol_.knots.push_back(t_rec);
      sol_.states.push_back(y_rec);
      sol_.steps.push_back(std::move(step));
    } else {
      while (opt_.record_stride > 0 && next_record_ < t_rec) {
        sol_.knots.push_back(next_record_);
        sol_.states.push_back(step.eval(next_record_));
        next_record_ += opt_.record_stride;
      }
      if (stop || t1 >= t_end_) {
        sol_.knots.push_back(t_rec);
        sol_.states.push_back(y_rec);
      }
    }
    if (stop) sol_.stopped_by_event = true;
    return stop;
  }

  bool admissible(const Vec& y) const { return !opt_.admissible || opt_.admissible(y); }

 private:
  const OdeRhs& rhs_;
  const std::vector<OdeEvent>& events_;
  const OdeOptions& opt_;
  double t_end_;
  OdeSolution& sol_;
  std::vector<bool> fired_;
  std::vector<double> g_prev_;
  double next_record_ = 0.0;
};

double rms_norm(const Vec& err, const Vec& y0, const Vec& y1, const OdeOptions& opt) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = opt.atol + opt.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = err(i) / sc;
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(std::max<Eigen::Index>(1, err.size())));
}

void solve_rk45(const OdeRhs& rhs, const Vec& y0, double t_end, Driver& drv, const OdeOptions& opt, OdeSolution& sol) {
  const Eigen::Index n = y0.size();
  double t = 0.0;
  Vec y = y0;
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
  rhs(t, y, k1);
  ++sol.stats.rhs_evals;

  double h = opt.h_init;
  if (h <= 0.0) {
    // Initial step heuristic of Hairer, Norsett & Wanner.
    Vec sc = (opt.atol + opt.rtol * y.cwiseAbs().array()).matrix();
    const double d0 = (y.array() / sc.array()).matrix().norm() / std::sqrt(double(n));
    const double d1n = (k1.array() / sc.array()).matrix().norm() / std::sqrt(double(n));
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h0 = std::min(h0, t_end);
    ytmp = y + h0 * k1;
    rhs(t + h0, ytmp, k2);
    ++sol.stats.rhs_evals;
    const double d2 = ((k2 - k1).array() / sc.array()).matrix().norm() / std::sqrt(double(n)) / h0;
    const double h1 = std::max(d1n, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                  : std::pow(0.01 / std::max(d1n, d2), 0.2);
    h = std::min(100.0 * h0, h1);
  }
  h = std::min(h, t_end);

  long steps = 0;
  while (t < t_end) {
    if (++steps > opt.max_steps) throw StepLimitExceeded("solve_ode: step budget exhausted at t=" + std::to_string(t));
    if (t + h > t_end) h = t_end - t;
    if (h < std::max(1e-14 * std::abs(t), std::numeric_limits<double>::min()))
      throw StepSizeUnderflow("solve_ode: step size underflow at t=" + std::to_string(t));

    ytmp = y + h * a21 * k1;
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    sol.stats.rhs_evals += 5;

    const bool ok_state = ynew.allFinite() && drv.admissible(ynew);
    if (!ok_state) {
      ++sol.stats.rejected;
      h *= 0.25;
      continue;
    }
    rhs(t + h, ynew, k7);
    ++sol.stats.rhs_evals;
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = rms_norm(err, y, ynew, opt);
    if (!std::isfinite(en) || en > 1.0) {
      ++sol.stats.rejected;
      const double fac = std::isfinite(en) ? std::max(0.2, 0.9 * std::pow(en, -0.2)) : 0.2;
      h *= fac;
      continue;
    }

    DenseStep step;
    step.t0 = t;
    step.h = h;
    step.r.resize(n, 5);
    const Vec ydiff = ynew - y;
    const Vec bspl = h * k1 - ydiff;
    step.r.col(0) = y;
    step.r.col(1) = ydiff;
    step.r.col(2) = bspl;
    step.r.col(3) = ydiff - h * k7 - bspl;
    step.r.col(4) = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

    const double t_new = (t_end - (t + h) <= 1e-15 * std::max(1.0, t_end)) ? t_end : t + h;
    if (drv.accept(std::move(step), t_new, ynew)) return;
    t = t_new;
    y = ynew;
    k1 = k7;
    const double fac = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
    h *= fac;
  }
}

void solve_abm4(const OdeRhs& rhs, const Vec& y0, double t_end, Driver& drv, const OdeOptions& opt, OdeSolution& sol) {
  const Eigen::Index n = y0.size();
  const long nsteps = std::max<long>(1, static_cast<long>(std::ceil(t_end / opt.h_fixed - 1e-9)));
  if (nsteps > opt.max_steps) throw StepLimitExceeded("solve_ode: ABM4 step count exceeds budget");
  const double h = t_end / static_cast<double>(nsteps);

  std::vector<Vec> f(4, Vec(n));  // f[0] newest
  Vec y = y0, fy(n), k2(n), k3(n), k4(n), tmp(n), ypred(n), fpred(n), ynew(n), fnew(n);
  rhs(0.0, y, fy);
  ++sol.stats.rhs_evals;

  auto make_step = [&](double t0, const Vec& ya, const Vec& fa, const Vec& yb, const Vec& fb) {
    DenseStep s;
    s.t0 = t0;
    s.h = h;
    s.r.resize(n, 5);
    const Vec ydiff = yb - ya;
    const Vec bspl = h * fa - ydiff;
    s.r.col(0) = ya;
    s.r.col(1) = ydiff;
    s.r.col(2) = bspl;
    s.r.col(3) = ydiff - h * fb - bspl;
    s.r.col(4).setZero();
    return s;
  };

  std::vector<Vec> hist{fy};
  for (long k = 0; k < nsteps; ++k) {
    const double t = h * static_cast<double>(k);
    const double t1 = k + 1 == nsteps ? t_end : h * static_cast<double>(k + 1);
    if (hist.size() < 4) {
      // Classical RK4 start-up.
      tmp = y + 0.5 * h * fy;
      rhs(t + 0.5 * h, tmp, k2);
      tmp = y + 0.5 * h * k2;
      rhs(t + 0.5 * h, tmp, k3);
      tmp = y + h * k3;
      rhs(t + h, tmp, k4);
      ynew = y + h / 6.0 * (fy + 2.0 * k2 + 2.0 * k3 + k4);
      sol.stats.rhs_evals += 3;
    } else {
      const Vec& f0 = hist[hist.size() - 1];
      const Vec& f1 = hist[hist.size() - 2];
      const Vec& f2 = hist[hist.size() - 3];
      const Vec& f3 = hist[hist.size() - 4];
      ypred = y + h / 24.0 * (55.0 * f0 - 59.0 * f1 + 37.0 * f2 - 9.0 * f3);
      rhs(t + h, ypred, fpred);
      ynew = y + h / 24.0 * (9.0 * fpred + 19.0 * f0 - 5.0 * f1 + f2);
      ++sol.stats.rhs_evals;
    }
    if (!ynew.allFinite() || !drv.admissible(ynew))
      throw StepSizeUnderflow("solve_ode: fixed-step integrator left the admissible region at t=" + std::to_string(t));
    rhs(t1, ynew, fnew);
    ++sol.stats.rhs_evals;
    if (drv.accept(make_step(t, y, fy, ynew, fnew), t1, ynew)) return;
    y = ynew;
    fy = fnew;
    hist.push_back(fnew);
    if (hist.size() > 4) hist.erase(hist.begin());
  }
}

}  // namespace

OdeSolution solve_ode(const OdeRhs& rhs, const Vec& y0, double t_end, const std::vector<OdeEvent>& events,
                      const OdeOptions& opt) {
  if (!(t_end > 0)) throw DomainError("solve_ode: integration span must be positive");
  OdeSolution sol;
  Driver drv(rhs, events, opt, t_end, sol);
  drv.start(0.0, y0);
  if (opt.method == OdeMethod::RK45) solve_rk45(rhs, y0, t_end, drv, opt, sol);
  else solve_abm4(rhs, y0, t_end, drv, opt, sol);
  return sol;
}

std::optional<double> first_crossing(const OdeSolution& sol, const std::function<double(double, const Vec&)>& g,
                                     double t_tol) {
  if (sol.knots.size() < 2) return std::nullopt;
  int s0 = sign_of(g(sol.knots[0], sol.states[0]));
  for (size_t k = 1; k < sol.knots.size(); ++k) {
    const int s1 = sign_of(g(sol.knots[k], sol.states[k]));
    if (s1 != 0 && s1 != s0) {
      double lo = sol.knots[k - 1], hi = sol.knots[k];
      while (hi - lo > t_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (sign_of(g(mid, sol.at(mid))) == s1) hi = mid;
        else lo = mid;
      }
      return hi;
    }
    if (s1 != 0) s0 = s1;
  }
  return std::nullopt;
}

}  // namespace memlab
