#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "memlab/errors.hpp"

namespace memlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------- quadrature

struct TailHint {
  enum class Kind { Exp, Poly };
  Kind kind = Kind::Exp;
  double param = 1.0;  // decay rate for Exp, power for Poly

  static TailHint exp(double rate) { return {Kind::Exp, rate}; }
  static TailHint poly(double power) { return {Kind::Poly, power}; }
};

struct QuadratureResult {
  double value = 0.0;
  double error_bound = 0.0;
  long evaluations = 0;
};

struct QuadOptions {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  int max_panels = 20000;
  std::vector<double> breakpoints;
};

using ScalarFn = std::function<double(double)>;

QuadratureResult integrate(const ScalarFn& f, double a, double b, const QuadOptions& opt = {});
QuadratureResult integrate_semiinf(const ScalarFn& f, TailHint hint, const QuadOptions& opt = {});

// ---------------------------------------------------------------- ODE

enum class OdeMethod { RK45, ABM4 };

using OdeRhs = std::function<void(double, const Vec&, Vec&)>;

struct OdeEvent {
  std::function<double(double, const Vec&)> g;
  bool terminal = false;
};

struct EventHit {
  int index = -1;
  double t = 0.0;
  Vec y;
};

struct OdeOptions {
  OdeMethod method = OdeMethod::RK45;
  double rtol = 1e-9;
  double atol = 1e-12;
  double h_fixed = 1e-3;  // ABM4 step
  double h_init = 0.0;
  long max_steps = 200'000'000;
  bool keep_dense = true;
  double record_stride = 0.0;  // only used when keep_dense is false
  std::function<bool(const Vec&)> admissible;
};

// One accepted step, stored in Dormand-Prince continuous-extension form
//   y(t0 + s h) = r0 + s (r1 + (1-s) (r2 + s (r3 + (1-s) r4)))
// ABM4 steps use r4 = 0, which is the cubic Hermite interpolant.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  Mat r;  // n x 5
  Vec eval(double t) const;
};

struct StepStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

struct OdeSolution {
  std::vector<double> knots;
  std::vector<Vec> states;
  std::vector<DenseStep> steps;
  std::vector<EventHit> events;
  StepStats stats;
  bool stopped_by_event = false;

  bool has_dense() const { return !steps.empty(); }
  Vec at(double t) const;
  double t_end() const { return knots.back(); }
};

OdeSolution solve_ode(const OdeRhs& rhs, const Vec& y0, double t_end,
                      const std::vector<OdeEvent>& events = {}, const OdeOptions& opt = {});

// First sign change of g along the dense output, refined by bisection.
std::optional<double> first_crossing(const OdeSolution& sol,
                                     const std::function<double(double, const Vec&)>& g,
                                     double t_tol);

// ---------------------------------------------------------------- linear algebra

template <typename Scalar>
struct SymEigResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> eigenvalues;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> eigenvectors;
};

// Cyclic Jacobi with a fixed (p, q) sweep order. Eigenvalues sorted descending.
template <typename Derived>
SymEigResult<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& input) {
  using Scalar = typename Derived::Scalar;
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using V = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using std::abs;
  using std::sqrt;

  M a = input;
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw NotSymmetric("sym_eig: matrix is not square");
  const Scalar fro = a.norm();
  if ((a - a.transpose()).norm() > Scalar(1e-12) * fro) throw NotSymmetric("sym_eig: matrix is not symmetric");
  a = (a + a.transpose()) / Scalar(2);

  M v = M::Identity(n, n);
  auto off_mass = [&] {
    Scalar s(0);
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += Scalar(2) * a(p, q) * a(p, q);
    return sqrt(s);
  };

  const Scalar stop = Scalar(1e-14) * fro;
  for (int sweep = 0; sweep < 100 && off_mass() > stop; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) / (abs(theta) + sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  SymEigResult<Scalar> out;
  out.eigenvalues = V(n);
  out.eigenvectors = M(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.eigenvalues(k) = a(order[k], order[k]);
    out.eigenvectors.col(k) = v.col(order[k]);
  }
  return out;
}

// e^{W t} by scaling and squaring with the degree-13 Pade approximant.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
mat_exp(const Eigen::MatrixBase<Derived>& w, typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using std::exp;

  const Eigen::Index n = w.rows();
  M a = w * t;

  bool diagonal = true;
  for (Eigen::Index i = 0; i < n && diagonal; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && a(i, j) != Scalar(0)) {
        diagonal = false;
        break;
      }
  if (diagonal) {
    M out = M::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) out(i, i) = exp(a(i, i));
    return out;
  }

  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  const Scalar norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > Scalar(5.371920351148152)) s = static_cast<int>(std::ceil(std::log2(double(norm1 / 5.371920351148152))));
  if (s > 0) a /= std::ldexp(1.0, s);

  const M id = M::Identity(n, n);
  const M a2 = a * a, a4 = a2 * a2, a6 = a4 * a2;
  const M u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const M v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  M r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < s; ++k) r = r * r;
  return r;
}

// ---------------------------------------------------------------- polynomials

// Chebyshev points of the first kind mapped to [0, 1], ascending.
Vec chebyshev_nodes01(int n);

struct PolyFit {
  Vec cheb;      // coefficients in T_k(2s - 1)
  Vec monomial;  // coefficients in s^k, ascending
  double cond_estimate = 0.0;
  bool through_origin = false;

  double operator()(double s) const;
};

// Least squares in the shifted Chebyshev basis. With through_origin the basis is
// s * T_k(2s - 1), k < degree, so the fitted p satisfies p(0) = 0.
PolyFit poly_fit(const Vec& s, const Vec& y, int degree, bool through_origin = false);

double chebyshev_eval01(const Vec& c, double s);

// Coefficients ascending: c0 + c1 v + ... + cn v^n.
std::vector<std::complex<double>> poly_roots(const Vec& coeffs);
std::vector<double> positive_real_roots(const Vec& coeffs);
double poly_eval(const Vec& coeffs, double v);
Vec poly_mul(const Vec& p, const Vec& q);

// ---------------------------------------------------------------- misc

double erfcx(double x);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

double golden_section_min(const ScalarFn& f, double lo, double hi, double tol, double* fmin = nullptr);

}  // namespace memlab
