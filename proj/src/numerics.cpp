#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "memlab/numerics.hpp"

namespace memlab {

Vec chebyshev_nodes01(int n) {
  Vec s(n);
  for (int k = 0; k < n; ++k) {
    const double x = std::cos((2.0 * (n - 1 - k) + 1.0) * std::numbers::pi / (2.0 * n));
    s(k) = 0.5 * (x + 1.0);
  }
  return s;
}

double chebyshev_eval01(const Vec& c, double s) {
  const double x = 2.0 * s - 1.0;
  double b1 = 0.0, b2 = 0.0;
  for (Eigen::Index k = c.size() - 1; k >= 1; --k) {
    const double b0 = 2.0 * x * b1 - b2 + c(k);
    b2 = b1;
    b1 = b0;
  }
  return (c.size() ? c(0) : 0.0) + x * b1 - b2;
}

double PolyFit::operator()(double s) const {
  const double q = chebyshev_eval01(cheb, s);
  return through_origin ? s * q : q;
}

namespace {

// Monomial coefficients (in s) of T_k(2s - 1), k = 0..n-1.
std::vector<Vec> shifted_chebyshev_monomials(int n) {
  std::vector<Vec> t;
  if (n >= 1) {
    Vec t0 = Vec::Zero(1);
    t0(0) = 1.0;
    t.push_back(t0);
  }
  if (n >= 2) {
    Vec t1(2);
    t1 << -1.0, 2.0;
    t.push_back(t1);
  }
  for (int k = 2; k < n; ++k) {
    Vec next = Vec::Zero(k + 1);
    const Vec& a = t[k - 1];
    const Vec& b = t[k - 2];
    // T_{k} = 2 (2s - 1) T_{k-1} - T_{k-2}
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      next(i + 1) += 4.0 * a(i);
      next(i) -= 2.0 * a(i);
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) next(i) -= b(i);
    t.push_back(next);
  }
  return t;
}

}  // namespace

PolyFit poly_fit(const Vec& s, const Vec& y, int degree, bool through_origin) {
  if (degree < 0) throw DomainError("poly_fit: negative degree");
  if (s.size() != y.size()) throw DomainError("poly_fit: sample size mismatch");
  const int nb = through_origin ? degree : degree + 1;
  if (nb < 1) throw DomainError("poly_fit: constrained fit needs degree >= 1");
  if (s.size() < nb) throw IllConditioned("poly_fit: fewer samples than basis functions");

  Mat v(s.size(), nb);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double x = 2.0 * s(i) - 1.0;
    double tkm1 = 1.0, tk = x;
    for (int k = 0; k < nb; ++k) {
      double tv;
      if (k == 0) tv = 1.0;
      else if (k == 1) tv = x;
      else {
        const double tn = 2.0 * x * tk - tkm1;
        tkm1 = tk;
        tk = tn;
        tv = tn;
      }
      v(i, k) = through_origin ? s(i) * tv : tv;
    }
  }

  Eigen::JacobiSVD<Mat> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0 ? std::pow(sv(0) / smin, 2) : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12)) throw IllConditioned("poly_fit: normal-equation condition estimate " + std::to_string(cond));

  PolyFit out;
  out.cheb = svd.solve(y);
  out.cond_estimate = cond;
  out.through_origin = through_origin;

  const auto basis = shifted_chebyshev_monomials(nb);
  out.monomial = Vec::Zero(degree + 1);
  const int shift = through_origin ? 1 : 0;
  for (int k = 0; k < nb; ++k)
    for (Eigen::Index i = 0; i < basis[k].size(); ++i) out.monomial(i + shift) += out.cheb(k) * basis[k](i);
  return out;
}

double poly_eval(const Vec& c, double v) {
  double acc = 0.0;
  for (Eigen::Index k = c.size() - 1; k >= 0; --k) acc = acc * v + c(k);
  return acc;
}

Vec poly_mul(const Vec& p, const Vec& q) {
  Vec r = Vec::Zero(p.size() + q.size() - 1);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    for (Eigen::Index j = 0; j < q.size(); ++j) r(i + j) += p(i) * q(j);
  return r;
}

std::vector<std::complex<double>> poly_roots(const Vec& coeffs) {
  Eigen::Index deg = coeffs.size() - 1;
  while (deg >= 0 && coeffs(deg) == 0.0) --deg;
  if (deg < 1) throw DegreeZero("poly_roots: polynomial has degree zero");

  Mat comp = Mat::Zero(deg, deg);
  for (Eigen::Index i = 1; i < deg; ++i) comp(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < deg; ++i) comp(i, deg - 1) = -coeffs(i) / coeffs(deg);

  Eigen::EigenSolver<Mat> es(comp, false);
  std::vector<std::complex<double>> roots;
  for (Eigen::Index i = 0; i < deg; ++i) {
    std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z.imag()) < 1e-9) z = {z.real(), 0.0};
    roots.push_back(z);
  }
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return roots;
}

std::vector<double> positive_real_roots(const Vec& coeffs) {
  std::vector<double> out;
  for (const auto& z : poly_roots(coeffs)) {
    if (z.imag() != 0.0 || !(z.real() > 0)) continue;
    // One Newton polish against the original coefficients.
    double v = z.real();
    Vec d(std::max<Eigen::Index>(1, coeffs.size() - 1));
    for (Eigen::Index k = 1; k < coeffs.size(); ++k) d(k - 1) = k * coeffs(k);
    const double dp = poly_eval(d, v);
    if (dp != 0.0) v -= poly_eval(coeffs, v) / dp;
    out.push_back(v);
  }
  return out;
}

double erfcx(double x) {
  if (x < 4.0) return std::exp(x * x) * std::erfc(x);
  // Continued fraction erfc(x) e^{x^2} = (1/sqrt(pi)) 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))),
  // evaluated bottom-up with a depth that is ample for x >= 4.
  double f = x;
  for (int k = 60; k >= 1; --k) f = x + 0.5 * k / f;
  return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line: need at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
  return f;
}

double golden_section_min(const ScalarFn& f, double lo, double hi, double tol, double* fmin) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double x = fc < fd ? c : d;
  if (fmin) *fmin = std::min(fc, fd);
  return x;
}

}  // namespace memlab
