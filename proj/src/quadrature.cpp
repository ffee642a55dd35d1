#include <cmath>
#include <limits>
#include <queue>

#include "memlab/numerics.hpp"

namespace memlab {

namespace {

constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gk15(const ScalarFn& f, double a, double b, long& evals) {
  const double c = 0.5 * (a + b), hl = 0.5 * (b - a);
  const double fc = f(c);
  double kron = fc * kWgk[7];
  double gauss = fc * kWg[3];
  double absum = std::abs(fc) * kWgk[7];
  for (int j = 0; j < 7; ++j) {
    const double dx = hl * kXgk[j];
    const double f1 = f(c - dx), f2 = f(c + dx);
    kron += kWgk[j] * (f1 + f2);
    absum += kWgk[j] * (std::abs(f1) + std::abs(f2));
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  evals += 15;
  const double eps = std::numeric_limits<double>::epsilon();
  const double err = std::abs((kron - gauss) * hl) + 50.0 * eps * absum * std::abs(hl);
  return {a, b, kron * hl, err};
}

double tolerance(const QuadOptions& opt, double value) {
  return std::max(opt.abs_tol, opt.rel_tol * std::abs(value));
}

}  // namespace

QuadratureResult integrate(const ScalarFn& f, double a, double b, const QuadOptions& opt) {
  QuadratureResult res;
  if (b == a) return res;
  if (b < a) {
    res = integrate(f, b, a, opt);
    res.value = -res.value;
    return res;
  }

  std::vector<double> cuts{a};
  for (double x : opt.breakpoints)
    if (x > a && x < b) cuts.push_back(x);
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::priority_queue<Panel> heap;
  double value = 0.0, error = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    Panel p = gk15(f, cuts[i], cuts[i + 1], res.evaluations);
    value += p.value;
    error += p.error;
    heap.push(p);
  }

  // Panels too narrow to split further stay in the sum but leave the heap.
  double frozen_error = 0.0;
  while (error > tolerance(opt, value)) {
    if (static_cast<int>(heap.size()) >= opt.max_panels || heap.empty())
      throw QuadratureFailure("integrate: panel budget exhausted with error bound " + std::to_string(error));
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b) || (worst.b - worst.a) < 1e-14 * std::max(1.0, std::abs(mid))) {
      frozen_error += worst.error;
      if (frozen_error > tolerance(opt, value))
        throw QuadratureFailure("integrate: cannot refine below roundoff");
      continue;
    }
    Panel left = gk15(f, worst.a, mid, res.evaluations);
    Panel right = gk15(f, mid, worst.b, res.evaluations);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }

  // Recompute the sums from the panels to shed accumulated update roundoff.
  double v = 0.0, e = frozen_error;
  while (!heap.empty()) {
    v += heap.top().value;
    e += heap.top().error;
    heap.pop();
  }
  res.value = v;
  res.error_bound = e;
  return res;
}

QuadratureResult integrate_semiinf(const ScalarFn& f, TailHint hint, const QuadOptions& opt) {
  if (hint.kind == TailHint::Kind::Exp && !(hint.param > 0))
    throw DomainError("integrate_semiinf: exponential tail rate must be positive");
  if (hint.kind == TailHint::Kind::Poly && !(hint.param > 1))
    throw DomainError("integrate_semiinf: polynomial tail power must exceed 1");

  long evals = 0;
  // Envelope C e^{-r t} or C t^{-p} fitted through samples at and beyond T.
  auto tail_bound = [&](double t) {
    double worst = 0.0;
    for (double k : {1.0, 1.25, 1.5, 2.0, 3.0}) {
      const double s = k * t;
      const double fs = std::abs(f(s));
      ++evals;
      const double scale = hint.kind == TailHint::Kind::Exp ? std::exp(hint.param * (s - t)) : std::pow(s / t, hint.param);
      worst = std::max(worst, fs * scale);
    }
    if (hint.kind == TailHint::Kind::Exp) return worst / hint.param;
    return worst * t / (hint.param - 1.0);
  };

  const double target = 0.25 * std::max(opt.abs_tol, 0.0);
  double t_cut = 1.0;
  for (double x : opt.breakpoints) t_cut = std::max(t_cut, 2.0 * x);
  double tb = tail_bound(t_cut);
  // With a relative tolerance only, a rough magnitude of the integral sets the target.
  double rough = 0.0;
  if (opt.rel_tol > 0) {
    QuadOptions o = opt;
    o.abs_tol = std::max(opt.abs_tol, 1e-300);
    o.rel_tol = 1e-3;
    rough = std::abs(integrate(f, 0.0, t_cut, o).value);
  }
  auto tail_target = [&] { return std::max(target, 0.25 * opt.rel_tol * rough); };
  while (tb > tail_target()) {
    t_cut *= 2.0;
    if (t_cut > 1e15) throw QuadratureFailure("integrate_semiinf: tail bound does not reach tolerance");
    tb = tail_bound(t_cut);
  }

  QuadOptions inner = opt;
  for (double x = 1.0; x < t_cut; x *= 2.0) inner.breakpoints.push_back(x);
  inner.abs_tol = std::max(opt.abs_tol - tb, 0.5 * opt.abs_tol);
  if (opt.rel_tol > 0) inner.rel_tol = 0.75 * opt.rel_tol;
  QuadratureResult res = integrate(f, 0.0, t_cut, inner);
  res.error_bound += tb;
  res.evaluations += evals;
  if (res.error_bound > tolerance(opt, res.value))
    throw QuadratureFailure("integrate_semiinf: certified bound exceeds tolerance");
  return res;
}

}  // namespace memlab
