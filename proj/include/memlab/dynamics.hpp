#pragma once

#include <optional>
#include <utility>

#include "memlab/expsum.hpp"
#include "memlab/io.hpp"

namespace memlab {

struct FlowConfig {
  MemoryKernel target;
  Model init;
  OdeMethod method = OdeMethod::RK45;
  double tau_max = 1.0;
  double delta = 1e-3;
  double record_stride = 0.0;  // 0 keeps the full dense output
  double rtol = 1e-9;
  double atol = 1e-12;
  double h_fixed = 1e-3;       // ABM4 step
  double w_floor = 1e-8;
  bool stop_at_loss_hit = false;

  // The hitting-time theory assumes delta << 1.
  bool delta_warning() const { return delta >= 0.1; }
};

struct HittingTimes {
  std::optional<double> tau0_param;
  std::optional<double> tau0_loss;
};

struct FlowTrajectory {
  OdeSolution ode;
  MemoryKernel target;
  Vec theta0;
  long theta_dim = 0;  // leading state components holding theta; heavy-ball appends velocities
  double target_norm_sq = 0.0;
  double loss0 = 0.0;
  std::vector<double> loss_series;
  std::vector<double> grad_norm_series;
  HittingTimes events;

  Eigen::Index m() const { return theta_dim / 2; }
  Vec theta_at(double tau) const { return ode.at(tau).head(theta_dim); }
  double loss_at(double tau) const;
};

FlowTrajectory gradient_flow(const FlowConfig& cfg);

// rho x'' + ((1 - rho) / sqrt(eta)) x' + grad J(x) = 0, started with x'(0) = -sqrt(eta) grad J(x0).
// rho = 0 degenerates to the rescaled first-order flow x' = -sqrt(eta) grad J.
FlowTrajectory heavy_ball_flow(const FlowConfig& cfg, double rho, double eta);

HittingTimes hitting_times(const FlowTrajectory& traj, double delta);

struct EscapePrediction {
  double tau = 0.0;       // +inf when g0 = 0
  double grad_norm = 0.0;
  double lambda_min = 0.0;
  Vec eigenvalues;        // descending
  Vec mode_projections;   // P^T g0 in the eigenbasis
};

EscapePrediction linearized_escape_prediction(const Model& theta0, const MemoryKernel& target, double delta);

// ---------------------------------------------------------------- two-rate symmetric case

// J(w1, w2) for a = (1, 1) against rho = e^{-w1* t} + e^{-w2* t}.
double loss_2d(double w1, double w2, const std::pair<double, double>& w_star);
// Right-hand side of the symmetric one-rate ODE v' = 1/v^2 - 2 sum_c 1/(v + c)^2.
double flow_1d_rhs(double v, const std::pair<double, double>& w_star);
// p(v) = (v + c1)^2 (v + c2)^2 - 2 v^2 [(v + c1)^2 + (v + c2)^2], coefficients ascending.
Vec quartic_p(const std::pair<double, double>& w_star);
// W(w) = -1/w^3 + 4/(w + c1)^3 + 4/(w + c2)^3, the linear growth rate of the separation gap.
double gap_rate(double w, const std::pair<double, double>& w_star);

struct Plateau2dOptions {
  double eps_sep = 0.1;     // T_separation: |w2 - w1| >= eps_sep
  double eps_loss = 1e-3;   // T_plateau: |J(w1, w2) - J(u, u)| >= eps_loss
  double reach_tol = 1e-2;  // plateau clock starts once |u - v_limit| < reach_tol
  double rtol = 1e-11;
  double atol = 1e-14;
};

struct Plateau2dResult {
  std::optional<double> t_separation;
  std::optional<double> t_reach;
  std::optional<double> t_plateau;
  double v_limit = 0.0;
  double gap_rate_at_limit = 0.0;
  OdeSolution ode;  // state (u, g) with u = (w1 + w2)/2, g = w2 - w1
};

Plateau2dResult flow_2d_symmetric(const std::pair<double, double>& w_star, double xi, double delta, double tau_max,
                                  const Plateau2dOptions& opt = {});

// ---------------------------------------------------------------- quadratic momentum example

enum class EscapeMethod { GradientFlow, Momentum };

struct QuadraticEscape {
  double measured = 0.0;
  double formula = 0.0;
  double threshold = 0.0;
};

// f(x) = (x1^2 - eps x2^2)/2 from x(0) = (delta_init, 1); escape when f <= -delta0/2.
QuadraticEscape quadratic_escape(double eps, double delta_init, double delta0, EscapeMethod method);

// ---------------------------------------------------------------- plateau detection and export

struct PlateauReport {
  bool flagged = false;   // flat window of sufficient length bracketed by drops on both sides
  size_t start = 0;
  size_t end = 0;         // exclusive; end - start is the duration in samples
  size_t duration = 0;
  size_t samples = 0;
};

struct PlateauCriteria {
  double flat_tol = 0.01;       // relative decrease allowed inside the window
  double min_fraction = 0.3;    // window length relative to the series
  double bracket_drop = 0.1;    // relative drop required before and after
};

// Longest window whose relative decrease stays below flat_tol, among windows preceded by
// a bracket_drop decrease. Heuristic diagnostic only.
PlateauReport detect_plateau(const std::vector<double>& loss, const PlateauCriteria& c = {});

// Loss sampled on a uniform tau grid, for feeding continuous flows to detect_plateau.
std::vector<double> resample_loss(const FlowTrajectory& traj, size_t samples);

CsvTable trajectory_table(const FlowTrajectory& traj, double stride);
Json hitting_json(const HittingTimes& h);

}  // namespace memlab
