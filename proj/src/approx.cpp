#include <cmath>

#include "memlab/approx.hpp"

namespace memlab {

double RateConstruction::operator()(double t) const {
  const double s = s_of(t);
  return s * q_fit(s);
}

namespace {

void check_decay(const MemoryKernel& target, int alpha, double beta) {
  const double t_hi = 20.0 * (alpha + 1) / beta;
  const int n = 400;
  double first = 0.0, second = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double t = t_hi * k / n;
    const double v = std::abs(eval(target, t)) * std::exp(beta * t / (alpha + 1));
    if (!std::isfinite(v)) throw DecayViolation("rate_construct: rho(t) e^{beta t/(alpha+1)} is not finite");
    double& half = 2 * k <= n ? first : second;
    half = std::max(half, v);
  }
  if (second > 1.5 * first + 1e-300)
    throw DecayViolation("rate_construct: rho(t) e^{beta t/(alpha+1)} grows on [0, " + std::to_string(t_hi) +
                         "]; lower beta");
}

double gamma_estimate(const MemoryKernel& target, int alpha, double beta) {
  const double t_hi = 20.0 * (alpha + 1) / beta;
  const double h = 1e-3;
  double g = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double t = t_hi * i / 400.0 + 2 * h * alpha;
    const double weight = std::exp(beta * t / (alpha + 1));
    double deriv = eval(target, t);
    g = std::max(g, weight * std::abs(deriv));
    for (int k = 1; k <= alpha; ++k) {
      // k-th central difference
      double acc = 0.0, binom = 1.0;
      for (int j = 0; j <= k; ++j) {
        acc += ((j % 2) ? -1.0 : 1.0) * binom * eval(target, t + (0.5 * k - j) * h);
        binom = binom * (k - j) / (j + 1);
      }
      deriv = acc / std::pow(h, k);
      g = std::max(g, std::pow(beta, -k) * weight * std::abs(deriv));
    }
  }
  return g;
}

std::vector<double> kernel_breakpoints(const MemoryKernel& k) {
  std::vector<double> pts;
  if (const auto* t = std::get_if<TruncatedKernel>(&k)) {
    pts = {t->cutoff, t->cutoff + 1.0};
  } else if (const auto* b = std::get_if<GaussianBump>(&k)) {
    pts = {std::max(0.0, b->center - 4 * b->width), b->center, b->center + 4 * b->width};
  } else if (const auto* c = std::get_if<CompositeKernel>(&k)) {
    pts = {std::max(0.0, c->bump.center - 4 * c->bump.width), c->bump.center, c->bump.center + 4 * c->bump.width};
  }
  return pts;
}

}  // namespace

RateConstruction rate_construct(const MemoryKernel& target, int alpha, double beta, int m) {
  if (alpha < 1) throw DomainError("rate_construct: alpha must be a positive integer");
  if (!(beta > 0)) throw DomainError("rate_construct: beta must be positive");
  if (m < 1 || m > 64) throw IllConditioned("rate_construct: width must lie in 1..64");
  check_decay(target, alpha, beta);

  RateConstruction rc;
  rc.alpha = alpha;
  rc.beta = beta;
  rc.m = m;
  const int n = std::max(4 * m, 32);
  const Vec s = chebyshev_nodes01(n);
  Vec q(n);
  for (int i = 0; i < n; ++i) q(i) = eval(target, -(alpha + 1) * std::log(s(i)) / beta) / s(i);
  rc.q_fit = poly_fit(s, q, m - 1, false);

  rc.c = Vec::Ones(m);
  rc.rates.resize(m);
  for (int k = 1; k <= m; ++k) rc.rates(k - 1) = -k * beta / (alpha + 1);
  rc.u = rc.q_fit.monomial;
  rc.gamma_estimate = gamma_estimate(target, alpha, beta);
  return rc;
}

double l1_error(const RateConstruction& rc, const MemoryKernel& target) {
  QuadOptions opt;
  opt.abs_tol = 1e-14;
  opt.rel_tol = 1e-9;
  opt.max_panels = 400000;
  opt.breakpoints = kernel_breakpoints(target);
  auto f = [&](double t) { return std::abs(eval(target, t) - rc(t)); };
  const double model_rate = rc.beta / (rc.alpha + 1);
  TailHint hint = tail_hint(target);
  if (hint.kind == TailHint::Kind::Exp) hint.param = std::min(hint.param, model_rate);
  return integrate_semiinf(f, hint, opt).value;
}

TruncationResult truncate_and_bound(const PowerLawKernel& target, double T) {
  if (!(T >= 1)) throw DomainError("truncate_and_bound: T must be at least 1");
  const double om = target.omega();
  TruncationResult r{TruncatedKernel(MemoryKernel{target}, T), 0.0, 0.0};
  r.tail_bound = target.scale * std::pow(1.0 + T, -om) / om;
  const MemoryKernel full{target}, cut{r.kernel};
  QuadOptions opt;
  opt.abs_tol = 1e-15;
  opt.rel_tol = 1e-10;
  const double blend = integrate([&](double t) { return std::abs(eval(full, t) - eval(cut, t)); }, T, T + 1.0, opt).value;
  r.trunc_error = blend + target.scale * std::pow(2.0 + T, -om) / om;
  return r;
}

WidthPoint width_point(const MemoryKernel& target, int m, int alpha) {
  WidthPoint p;
  p.m = m;
  if (const auto* pl = std::get_if<PowerLawKernel>(&target)) {
    auto total_at = [&](double log_t, WidthPoint* out) {
      const double T = std::exp(log_t);
      const TruncationResult tr = truncate_and_bound(*pl, T);
      const MemoryKernel cut{tr.kernel};
      const double beta = 2.0 / T;
      const double l1 = l1_error(rate_construct(cut, alpha, beta, m), cut);
      if (out) *out = {m, T, beta, l1, tr.trunc_error, l1 + tr.trunc_error};
      return l1 + tr.trunc_error;
    };
    const double log_t = golden_section_min([&](double x) { return total_at(x, nullptr); }, 0.0, std::log(1e4), 1e-2);
    total_at(log_t, &p);
    return p;
  }
  double beta;
  if (const auto* tr = std::get_if<TruncatedKernel>(&target)) {
    beta = 2.0 / tr->cutoff;
  } else {
    const TailHint h = tail_hint(target);
    beta = (alpha + 1) * h.param;
  }
  p.beta = beta;
  p.l1 = l1_error(rate_construct(target, alpha, beta, m), target);
  p.total = p.l1;
  return p;
}

WidthSweep min_width_sweep(const MemoryKernel& target, double eps, const WidthOptions& opt) {
  if (!(eps > 0)) throw DomainError("min_width: eps must be positive");
  if (opt.m_cap < 1 || opt.m_cap > 64) throw DomainError("min_width: m_cap must lie in 1..64");
  WidthSweep sw;
  sw.best_total = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= opt.m_cap; ++m) {
    const WidthPoint p = width_point(target, m, opt.alpha);
    sw.curve.push_back(p);
    sw.best_total = std::min(sw.best_total, p.total);
    if (p.total <= eps && !sw.m_min) {
      sw.m_min = m;
      if (opt.stop_at_first) break;
    }
  }
  return sw;
}

int min_width(const MemoryKernel& target, double eps, const WidthOptions& opt) {
  const WidthSweep sw = min_width_sweep(target, eps, opt);
  if (!sw.m_min)
    throw CapExceeded("min_width: no width up to " + std::to_string(opt.m_cap) + " reaches " + format_double(eps) +
                      "; best total error " + format_double(sw.best_total));
  return *sw.m_min;
}

CsvTable width_table(const WidthSweep& sweep) {
  CsvTable t;
  t.columns = {"m", "T", "l1_error", "tail_bound", "total"};
  for (const auto& p : sweep.curve)
    t.add({static_cast<long long>(p.m), p.T, p.l1, p.tail_bound, p.total});
  return t;
}

}  // namespace memlab
