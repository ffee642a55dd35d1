#include <cmath>
#include <numbers>

#include "memlab/kernels.hpp"

namespace memlab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// Points where quadrature panels should start so narrow features are not stepped over.
std::vector<double> feature_points(const MemoryKernel& k) {
  return std::visit(overloaded{
                        [](const GaussianBump& b) {
                          return std::vector<double>{std::max(0.0, b.center - 4 * b.width), b.center,
                                                     b.center + 4 * b.width};
                        },
                        [](const CompositeKernel& c) {
                          return std::vector<double>{std::max(0.0, c.bump.center - 4 * c.bump.width), c.bump.center,
                                                     c.bump.center + 4 * c.bump.width};
                        },
                        [](const TruncatedKernel& t) {
                          auto pts = feature_points(*t.inner);
                          pts.push_back(t.cutoff);
                          return pts;
                        },
                        [](const auto&) { return std::vector<double>{}; },
                    },
                    k);
}

double integrate_kernel(const MemoryKernel& k, const ScalarFn& f, double decay_rate) {
  QuadOptions opt;
  opt.abs_tol = 0.0;
  opt.rel_tol = kKernelQuadTol;
  opt.breakpoints = feature_points(k);
  if (const auto* t = std::get_if<TruncatedKernel>(&k)) {
    opt.breakpoints.push_back(t->cutoff + 1.0);
    return integrate(f, 0.0, t->cutoff + 1.0, opt).value;
  }
  return integrate_semiinf(f, tail_hint(k, decay_rate), opt).value;
}

}  // namespace

ExpSumKernel::ExpSumKernel(Vec a, Vec w) : coeffs(std::move(a)), rates(std::move(w)) {
  if (coeffs.size() != rates.size() || coeffs.size() == 0)
    throw DomainError("ExpSum kernel: coefficient and rate vectors must be non-empty and equal length");
  for (Eigen::Index i = 0; i < rates.size(); ++i)
    if (!(rates(i) > 0)) throw DomainError("ExpSum kernel: rates must be strictly positive");
}

bool ExpSumKernel::nondegenerate() const {
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    if (coeffs(i) == 0.0) return false;
    for (Eigen::Index j = i + 1; j < rates.size(); ++j)
      if (rates(i) == rates(j)) return false;
  }
  return true;
}

GaussianBump::GaussianBump(double c0, double mu, double sigma) : amplitude(c0), center(mu), width(sigma) {
  if (!(mu > 0) || !(sigma > 0)) throw DomainError("Gaussian bump: center and width must be positive");
}

PowerLawKernel::PowerLawKernel(double p, double c) : exponent(p), scale(c) {
  if (!(p > 1)) throw DomainError("power-law kernel: exponent must exceed 1");
  if (!(c > 0)) throw DomainError("power-law kernel: scale must be positive");
}

TruncatedKernel::TruncatedKernel(MemoryKernel k, double T)
    : inner(std::make_shared<const MemoryKernel>(std::move(k))), cutoff(T) {
  if (!(T > 0)) throw DomainError("truncated kernel: cutoff must be positive");
}

double eval(const MemoryKernel& k, double t) {
  return std::visit(overloaded{
                        [t](const ExpSumKernel& e) { return (e.coeffs.array() * (-e.rates.array() * t).exp()).sum(); },
                        [t](const GaussianBump& b) {
                          const double z = (t - b.center) / b.width;
                          return b.amplitude * std::exp(-0.5 * z * z);
                        },
                        [t](const CompositeKernel& c) {
                          return eval(MemoryKernel{c.base}, t) + eval(MemoryKernel{c.bump}, t);
                        },
                        [t](const PowerLawKernel& p) { return p.scale * std::pow(1.0 + t, -p.exponent); },
                        [t](const TruncatedKernel& tr) {
                          if (t <= tr.cutoff) return eval(*tr.inner, t);
                          if (t >= tr.cutoff + 1.0) return 0.0;
                          const double u = t - tr.cutoff;
                          return eval(*tr.inner, tr.cutoff) * (1.0 - u * u * (3.0 - 2.0 * u));
                        },
                    },
                    k);
}

double bump_moment(const GaussianBump& b, int n, double s) {
  if (n < 0) throw DomainError("bump_moment: negative order");
  if (b.amplitude == 0.0) return 0.0;
  const double sig = b.width, mu = b.center;
  const double nu = mu - s * sig * sig;
  const double x = -nu / (sig * std::numbers::sqrt2);
  if (x > 10.0) {
    // Deep cancellation regime for the recursion; integrate directly.
    QuadOptions opt;
    opt.abs_tol = 0.0;
    opt.rel_tol = kKernelQuadTol;
    opt.breakpoints = {std::max(0.0, mu - 4 * sig), mu, mu + 4 * sig};
    auto f = [&](double t) {
      const double z = (t - mu) / sig;
      return std::pow(t, n) * std::exp(-s * t - 0.5 * z * z);
    };
    return b.amplitude * integrate_semiinf(f, TailHint::exp(std::max(s, 1e-3)), opt).value;
  }
  const double root = sig * std::sqrt(std::numbers::pi / 2.0);
  const double g = std::exp(-mu * mu / (2.0 * sig * sig));
  const double s0 = x > 0 ? root * g * erfcx(x) : root * std::exp(0.5 * s * s * sig * sig - s * mu) * std::erfc(x);
  double prev2 = 0.0, prev1 = s0;
  for (int k = 1; k <= n; ++k) {
    double cur = nu * prev1 + sig * sig * (k - 1) * prev2;
    if (k == 1) cur += sig * sig * g;
    prev2 = prev1;
    prev1 = cur;
  }
  return b.amplitude * prev1;
}

double moment(const MemoryKernel& k, int n, double s) {
  if (!(s > 0)) throw DomainError("moment: s must be positive");
  return std::visit(overloaded{
                        [n, s](const ExpSumKernel& e) {
                          double acc = 0.0;
                          const double nf = factorial(n);
                          for (Eigen::Index j = 0; j < e.coeffs.size(); ++j)
                            acc += e.coeffs(j) * nf / std::pow(s + e.rates(j), n + 1);
                          return acc;
                        },
                        [n, s](const GaussianBump& b) { return bump_moment(b, n, s); },
                        [n, s](const CompositeKernel& c) {
                          return moment(MemoryKernel{c.base}, n, s) + bump_moment(c.bump, n, s);
                        },
                        [n, s, &k](const auto&) {
                          auto f = [&](double t) { return std::pow(t, n) * std::exp(-s * t) * eval(k, t); };
                          return integrate_kernel(k, f, s);
                        },
                    },
                    k);
}

double laplace(const MemoryKernel& k, double s) { return moment(k, 0, s); }

double l2_norm_sq(const MemoryKernel& k) {
  return std::visit(overloaded{
                        [](const ExpSumKernel& e) {
                          double acc = 0.0;
                          for (Eigen::Index i = 0; i < e.coeffs.size(); ++i)
                            for (Eigen::Index j = 0; j < e.coeffs.size(); ++j)
                              acc += e.coeffs(i) * e.coeffs(j) / (e.rates(i) + e.rates(j));
                          return acc;
                        },
                        [](const GaussianBump& b) {
                          return b.amplitude * b.amplitude * b.width * std::sqrt(std::numbers::pi) / 2.0 *
                                 std::erfc(-b.center / b.width);
                        },
                        [](const CompositeKernel& c) {
                          double cross = 0.0;
                          for (Eigen::Index j = 0; j < c.base.coeffs.size(); ++j)
                            cross += c.base.coeffs(j) * bump_moment(c.bump, 0, c.base.rates(j));
                          return l2_norm_sq(MemoryKernel{c.base}) + 2.0 * cross + l2_norm_sq(MemoryKernel{c.bump});
                        },
                        [](const PowerLawKernel& p) { return p.scale * p.scale / (2.0 * p.exponent - 1.0); },
                        [&k](const TruncatedKernel&) {
                          auto f = [&](double t) {
                            const double v = eval(k, t);
                            return v * v;
                          };
                          return integrate_kernel(k, f, 0.0);
                        },
                    },
                    k);
}

double delta_moment(const GaussianBump& bump, int n, double w) {
  if (n < 0 || n > 3) throw DomainError("delta_moment: order must be in 0..3");
  if (!(w > 0)) throw DomainError("delta_moment: w must be positive");
  GaussianBump abs_bump = bump;
  abs_bump.amplitude = std::abs(bump.amplitude);
  return bump_moment(abs_bump, n, w);
}

double delta_moment(const CompositeKernel& k, int n, double w) { return delta_moment(k.bump, n, w); }

SubGaussianTail default_tail(const GaussianBump& bump) {
  return {std::abs(bump.amplitude), 1.0 / (2.0 * bump.width * bump.width), 0.0};
}

double subgaussian_bound(int n, double w, double omega, const SubGaussianTail& tail, double prefactor) {
  if (n < 0) throw DomainError("subgaussian_bound: negative order");
  if (!(w > 0) || !(tail.c1 > 0)) throw DomainError("subgaussian_bound: w and c1 must be positive");
  double cap = std::min(0.5, 2.0 * tail.c1 / w);
  if (tail.t0 > 0) cap = std::min(cap, 1.0 / tail.t0);
  if (!(omega > 0) || !(omega < cap))
    throw DomainError("subgaussian_bound: omega outside (0, " + std::to_string(cap) + ")");
  if (prefactor == 0.0) return 0.0;
  const double c2 = std::exp(1.0 / (4.0 * tail.c1));
  const double c3 = std::exp(tail.t0);
  return prefactor * tail.c0 * std::pow(omega, -n) * std::exp(-w / omega) * (std::pow(c2, w * w) + std::pow(c3, w));
}

TailHint tail_hint(const MemoryKernel& k, double extra_rate) {
  return std::visit(overloaded{
                        [extra_rate](const ExpSumKernel& e) { return TailHint::exp(e.rates.minCoeff() + extra_rate); },
                        [extra_rate](const CompositeKernel& c) {
                          return TailHint::exp(c.base.rates.minCoeff() + extra_rate);
                        },
                        [extra_rate](const PowerLawKernel& p) {
                          return extra_rate > 0 ? TailHint::exp(extra_rate) : TailHint::poly(p.exponent);
                        },
                        [extra_rate](const auto&) { return TailHint::exp(std::max(extra_rate, 1.0)); },
                    },
                    k);
}

bool is_completely_monotonic(const MemoryKernel& k) {
  if (const auto* e = std::get_if<ExpSumKernel>(&k)) return (e->coeffs.array() > 0).all();
  return std::holds_alternative<PowerLawKernel>(k);
}

std::string kind_name(const MemoryKernel& k) {
  static const char* names[] = {"expsum", "gaussian_bump", "composite", "power_law", "truncated"};
  return names[k.index()];
}

}  // namespace memlab
