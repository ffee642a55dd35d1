#pragma once

#include <cstdint>
#include <limits>

#include "memlab/dynamics.hpp"

namespace memlab {

// Counter-based generator: output k of stream (seed, stream) is a pure function of the triple,
// so results do not depend on which thread draws them or in what order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream);
  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct LinearRNN {
  Vec c;
  Mat W;
  Vec U;  // single input channel
  bool hurwitz = false;
  double max_real_part = 0.0;

  LinearRNN() = default;
  LinearRNN(Vec c, Mat W, Vec U);
  Eigen::Index m() const { return c.size(); }
  double kernel(double t) const;                   // c^T e^{W t} U
  static LinearRNN diagonal(const Model& model);   // c = 1, W = -diag(w), U = a
};

enum class InputKind { WhiteNoise, CosineMixture };

struct PathEnsemble {
  double dt = 0.01;
  double horizon = 6.4;
  long n_paths = 1000;
  InputKind kind = InputKind::WhiteNoise;
  std::uint64_t seed = 0;
  int cos_terms = 8;

  long steps() const { return std::lround(horizon / dt); }
  // White noise: increments dB_k ~ N(0, dt). Cosine mixture: x(k dt) = sum_j alpha_j cos(lambda_j k dt).
  std::vector<double> path(long index) const;
};

// Euler recursion h_{k+1} = h_k + dt (W h_k + U x_k), h_0 = 0; returns y_k = c^T h_k for k = 0..len(x).
std::vector<double> simulate(const LinearRNN& rnn, const std::vector<double>& x, double dt);

// int_0^T (c^T e^{Wt} U - rho(t))^2 dt
double closedform_finite_loss(const LinearRNN& rnn, const MemoryKernel& target, double T);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n = 0;
};

// Squared output error at time T under white-noise input, both outputs driven by the same increments.
McEstimate mc_loss(const LinearRNN& rnn, const MemoryKernel& target, const PathEnsemble& ens);

// ---------------------------------------------------------------- discrete training

enum class Optimizer { GD, HeavyBall };

struct TrainOptions {
  double dt = 0.1;
  double horizon = 32.0;
  double lr = 1.0;
  long steps = 1000;
  Optimizer optimizer = Optimizer::GD;
  double momentum = 0.9;
  double diverge_factor = 1e6;
  bool time_average = false;  // train on the loss divided by the horizon, i.e. the mean squared residual
};

// Expected white-noise loss of the Euler-discretized network, dt sum_k (c^T (I + dt W)^k U - rho(k dt))^2.
// For the Euler recursion this equals the white-noise expectation exactly.
struct DiscreteLoss {
  double value = 0.0;
  Vec grad_c;
  Mat grad_W;
  Vec grad_U;
  double grad_norm() const;
};

DiscreteLoss discrete_loss(const LinearRNN& rnn, const std::vector<double>& rho_samples, double dt,
                           bool with_grad = true);
std::vector<double> sample_kernel(const MemoryKernel& target, double dt, long steps);

struct TrainRecord {
  std::vector<double> loss;
  std::vector<double> grad_norm;
  LinearRNN final_rnn;
  PlateauReport plateau;
};

// Throws Diverged when the loss exceeds diverge_factor times its initial value or stops being finite.
TrainRecord gd_train(const LinearRNN& rnn0, const MemoryKernel& target, const TrainOptions& opt);

enum class IoInit {
  Normal,   // c, U ~ N(0, 1/m)
  Sign,     // c, U entries +-1/sqrt(m), independent signs
  Matched,  // c entries +-1/sqrt(m), U = c, so the diagonal part of the kernel is a positive exponential sum
};

struct RnnInit {
  int m = 16;
  double decay_lo = 0.1;
  double decay_hi = 1.0;
  double offdiag_scale = 0.3;
  bool decay_grid = false;  // evenly spaced decays on [lo, hi] instead of uniform draws
  IoInit io = IoInit::Normal;
  double io_scale = 1.0;  // multiplies c and U
  double dt = 0.1;  // initial W must keep I + dt W a contraction
};

// W = -diag(U(lo, hi)) (or an even grid on [lo, hi]) + scale * N(0, 1/m) off-diagonal, c and U per IoInit. Redrawn until
// W is Hurwitz and the Euler map is contracting.
LinearRNN random_rnn(const RnnInit& init, std::uint64_t seed);

// Plain gradient descent on the closed-form J(a, w).
Model gd_closed_form(const Model& init, const MemoryKernel& target, double lr, long steps);

CsvTable training_table(const TrainRecord& rec);

}  // namespace memlab
