#pragma once

#include <memory>
#include <variant>

#include "memlab/numerics.hpp"

namespace memlab {

struct ExpSumKernel {
  Vec coeffs;
  Vec rates;

  ExpSumKernel() = default;
  ExpSumKernel(Vec a, Vec w);
  bool nondegenerate() const;
};

struct GaussianBump {
  double amplitude = 1.0;
  double center = 10.0;  // mu = 1 / omega
  double width = 1.0;

  GaussianBump() = default;
  GaussianBump(double c0, double mu, double sigma);
};

struct CompositeKernel {
  ExpSumKernel base;
  GaussianBump bump;
};

struct PowerLawKernel {
  double exponent = 2.0;  // 1 + omega
  double scale = 1.0;

  PowerLawKernel() = default;
  PowerLawKernel(double p, double c);
  double omega() const { return exponent - 1.0; }
};

struct TruncatedKernel;

using MemoryKernel = std::variant<ExpSumKernel, GaussianBump, CompositeKernel, PowerLawKernel, TruncatedKernel>;

struct TruncatedKernel {
  std::shared_ptr<const MemoryKernel> inner;
  double cutoff = 1.0;

  TruncatedKernel() = default;
  TruncatedKernel(MemoryKernel k, double T);
};

// Default quadrature tolerance for kernels without closed forms.
inline constexpr double kKernelQuadTol = 1e-13;

double eval(const MemoryKernel& k, double t);
double laplace(const MemoryKernel& k, double s);
double l2_norm_sq(const MemoryKernel& k);

// Signed moment T_n(s) = int_0^inf t^n e^{-st} rho(t) dt. T_0 is the Laplace transform.
double moment(const MemoryKernel& k, int n, double s);

// Delta_n(w) = int_0^inf t^n e^{-wt} |rho_0(t)| dt for the Gaussian bump.
double delta_moment(const GaussianBump& bump, int n, double w);
double delta_moment(const CompositeKernel& k, int n, double w);

// Closed-form signed bump moment, also the building block of delta_moment.
double bump_moment(const GaussianBump& bump, int n, double s);

struct SubGaussianTail {
  double c0 = 1.0;
  double c1 = 0.5;
  double t0 = 0.0;
};

SubGaussianTail default_tail(const GaussianBump& bump);

// prefactor * c0 * omega^{-n} e^{-w/omega} (c2^{w^2} + c3^{w}), c2 = e^{1/(4 c1)}, c3 = e^{t0}.
double subgaussian_bound(int n, double w, double omega, const SubGaussianTail& tail, double prefactor = 1.0);

// Square-integrable decay class used for quadrature tail hints.
TailHint tail_hint(const MemoryKernel& k, double extra_rate = 0.0);
bool is_completely_monotonic(const MemoryKernel& k);
std::string kind_name(const MemoryKernel& k);

}  // namespace memlab
