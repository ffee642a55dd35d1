#pragma once

#include <cstdint>

#include "memlab/expsum.hpp"
#include "memlab/io.hpp"

namespace memlab {

struct Partition {
  int universe = 0;
  std::vector<std::vector<int>> blocks;       // I_1..I_d, 0-based indices
  std::vector<std::vector<int>> zero_blocks;  // I_{0,1}.., coefficients summing to zero

  void validate() const;
  int d() const { return static_cast<int>(blocks.size()); }
};

struct CriticalSpace {
  Partition partition;
  Vec anchor_b;
  Vec anchor_v;
  Vec zero_rates;  // one shared rate per zero block

  CriticalSpace() = default;
  CriticalSpace(Partition p, Vec b, Vec v, Vec zero_rates = {});
  int dimension() const;
};

std::uint64_t stirling2(int m, int d);
// sum_{d=1}^{d_max} d! {m, d}
std::uint64_t count_critical_spaces(int m, int d_max);

// All surjections {0..m-1} -> {0..d-1}, each read as an ordered partition. d! {m, d} of them.
std::vector<Partition> ordered_partitions(int m, int d);

struct AnchorFit {
  bool found = false;
  Vec b;
  Vec v;
  double loss = 0.0;
  double aw_residual = 0.0;  // generalized Aigrain-Williams residual
  bool degenerate = false;
  int converged_starts = 0;
};

struct AnchorOptions {
  int starts = 32;
  double v_lo = 0.05;
  double v_hi = 20.0;
  double residual_tol = 1e-7;
  int max_iter = 400;
};

// max_j of |L[rho_hat](v_j) - L[rho](v_j)| and |d/ds L[rho_hat](v_j) - d/ds L[rho](v_j)|.
double aigrain_williams_residual(const Vec& b, const Vec& v, const MemoryKernel& target);

AnchorFit find_nondegenerate_min(const MemoryKernel& target, int d, std::uint64_t seed,
                                 const AnchorOptions& opt = {});

// Free coordinates are, per block in order, the coefficients of all but the last member;
// the last member takes the remainder so block sums equal b_j (zero on zero blocks).
Model lift(const CriticalSpace& space, const Vec& free_coords, const MemoryKernel& target,
           double anchor_tol = 1e-7);

struct SpaceHessian {
  Vec eigenvalues;  // descending
  double threshold = 0.0;
  int rank = 0;
  int zero_count = 0;
  double grad_norm = 0.0;
};

inline constexpr double kZeroEigRel = 1e-8;

SpaceHessian hessian_on_space(const CriticalSpace& space, const Vec& free_coords, const MemoryKernel& target);

enum class Label2d { Saddle, DegenerateStable, Indeterminate };
std::string label_name(Label2d l);

struct Classified2d {
  double a1 = 0.0;
  double min_eig = 0.0;
  double threshold = 0.0;
  Label2d label = Label2d::Indeterminate;
};

struct Classification2d {
  double a_hat = 0.0;
  double w_hat = 0.0;
  std::vector<Classified2d> points;
};

// Points on the critical line (a1, a_hat - a1, w_hat, w_hat) of J_2 for an m* = 2 target.
// Grid values are given as fractions of a_hat.
Classification2d classify_2d(const ExpSumKernel& target, const std::vector<double>& a1_fractions,
                             std::uint64_t seed = 1);

Json space_json(const CriticalSpace& space, const SpaceHessian& h);

}  // namespace memlab
