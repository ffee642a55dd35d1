#pragma once

#include <optional>

#include "memlab/kernels.hpp"
#include "memlab/io.hpp"

namespace memlab {

// phi_m(t) = s Q(s) with s = e^{-beta t / (alpha + 1)}, i.e. c^T e^{W t} U with
// c = 1, W = diag(-k beta / (alpha + 1)), U = monomial coefficients of s Q(s).
struct RateConstruction {
  int alpha = 1;
  double beta = 1.0;
  int m = 1;
  PolyFit q_fit;         // Q, degree m - 1, fitted to q(s) = rho(t(s)) / s
  Vec c;                 // readout, all ones
  Vec rates;             // diagonal of W, -k beta / (alpha + 1), k = 1..m
  Vec u;                 // input weights
  double gamma_estimate = 0.0;

  double s_of(double t) const { return std::exp(-beta * t / (alpha + 1)); }
  double operator()(double t) const;  // Chebyshev-form evaluation of phi_m
  Mat w_matrix() const { return rates.asDiagonal(); }
};

RateConstruction rate_construct(const MemoryKernel& target, int alpha, double beta, int m);

// Certified int_0^inf |rho - phi_m| dt.
double l1_error(const RateConstruction& rc, const MemoryKernel& target);

struct TruncationResult {
  TruncatedKernel kernel;
  double tail_bound = 0.0;   // int_T^inf rho
  double trunc_error = 0.0;  // int_T^inf |rho - rho_truncated|, including the blend interval
};

TruncationResult truncate_and_bound(const PowerLawKernel& target, double T);

struct WidthPoint {
  int m = 0;
  double T = 0.0;  // 0 when no truncation is involved
  double beta = 0.0;
  double l1 = 0.0;
  double tail_bound = 0.0;
  double total = 0.0;
};

struct WidthSweep {
  std::optional<int> m_min;
  double best_total = 0.0;
  std::vector<WidthPoint> curve;
};

struct WidthOptions {
  int alpha = 1;
  int m_cap = 64;
  bool stop_at_first = true;
};

// Power-law targets are truncated at a T chosen per m by golden-section search on the certified
// total; other targets use beta = (alpha + 1) * slowest rate and no truncation.
WidthPoint width_point(const MemoryKernel& target, int m, int alpha);
WidthSweep min_width_sweep(const MemoryKernel& target, double eps, const WidthOptions& opt = {});
int min_width(const MemoryKernel& target, double eps, const WidthOptions& opt = {});  // throws CapExceeded

CsvTable width_table(const WidthSweep& sweep);

}  // namespace memlab
