#include <doctest.h>

#include <limits>

#include "memlab/dynamics.hpp"
#include "oracle.hpp"

using namespace memlab;

namespace {

MemoryKernel two_exp_target() { return ExpSumKernel(Vec::Ones(2), (Vec(2) << 0.5, 2.0).finished()); }

FlowConfig base_flow(const Model& init, double tau_max) {
  FlowConfig cfg;
  cfg.target = two_exp_target();
  cfg.init = init;
  cfg.tau_max = tau_max;
  cfg.delta = 1e-2;
  return cfg;
}

// First root of h on [0, hi] located by a fine scan and bisection.
template <typename H>
double first_root(H h, double hi, int scan = 2000000) {
  double lo = 0.0;
  const double step = hi / scan;
  for (int i = 1; i <= scan; ++i) {
    const double t = i * step;
    if (h(t) <= 0) {
      double a = lo, b = t;
      for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (a + b);
        (h(mid) <= 0 ? b : a) = mid;
      }
      return b;
    }
    lo = t;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

TEST_CASE("flow started at the global minimum stays put") {
  const Model opt(Vec::Ones(2), (Vec(2) << 0.5, 2.0).finished());
  const FlowTrajectory tr = gradient_flow(base_flow(opt, 50.0));
  CHECK(std::abs(tr.loss_series.back()) < 1e-14);
  CHECK((tr.theta_at(50.0) - opt.theta()).norm() < 1e-8);
  CHECK_FALSE(tr.events.tau0_param);
  CHECK_FALSE(tr.events.tau0_loss);
}

TEST_CASE("loss decreases along the flow at rate minus squared gradient norm") {
  const Model init((Vec(2) << 0.3, 1.5).finished(), (Vec(2) << 1.0, 3.0).finished());
  const FlowTrajectory tr = gradient_flow(base_flow(init, 20.0));
  const auto& L = tr.loss_series;
  for (size_t k = 1; k < L.size(); ++k) CHECK(L[k] <= L[k - 1] + 1e-6 * tr.loss0);

  const double h = 1e-4;
  for (double tau : {0.5, 2.0, 7.0, 15.0}) {
    const double slope = (tr.loss_at(tau + h) - tr.loss_at(tau - h)) / (2 * h);
    const Vec g = grad(Model::from_theta(tr.theta_at(tau)), tr.target);
    if (g.norm() > 1e-6) CHECK(slope == doctest::Approx(-g.squaredNorm()).epsilon(0.01));
  }
}

TEST_CASE("equal coordinates within a block remain equal") {
  const Model init((Vec(4) << 0.2, 0.2, 0.7, 0.7).finished(), (Vec(4) << 1.0, 1.0, 2.5, 2.5).finished());
  const FlowTrajectory tr = gradient_flow(base_flow(init, 30.0));
  for (const auto& y : tr.ode.states) {
    CHECK(std::abs(y(0) - y(1)) < 1e-10);
    CHECK(std::abs(y(2) - y(3)) < 1e-10);
    CHECK(std::abs(y(4) - y(5)) < 1e-10);
    CHECK(std::abs(y(6) - y(7)) < 1e-10);
  }
}

TEST_CASE("hitting times sit on the crossing surfaces") {
  const Model init((Vec(2) << 0.3, 1.5).finished(), (Vec(2) << 1.0, 3.0).finished());
  const FlowTrajectory tr = gradient_flow(base_flow(init, 20.0));
  REQUIRE(tr.events.tau0_param);
  REQUIRE(tr.events.tau0_loss);
  CHECK((tr.theta_at(*tr.events.tau0_param) - tr.theta0).norm() == doctest::Approx(1e-2).epsilon(1e-6));
  CHECK(std::abs(tr.loss_at(*tr.events.tau0_loss) - tr.loss0) == doctest::Approx(1e-2).epsilon(1e-6));
  const HittingTimes again = hitting_times(tr, 1e-2);
  CHECK(*again.tau0_param == doctest::Approx(*tr.events.tau0_param).epsilon(1e-6));
}

TEST_CASE("heavy-ball flow with zero mass is the time-rescaled gradient flow") {
  const Model init((Vec(2) << 0.3, 1.5).finished(), (Vec(2) << 1.0, 3.0).finished());
  const double eta = 2.25;
  const FlowTrajectory gf = gradient_flow(base_flow(init, 15.0));
  const FlowTrajectory hb = heavy_ball_flow(base_flow(init, 10.0), 0.0, eta);
  for (double t : {1.0, 4.0, 9.5}) CHECK((hb.theta_at(t) - gf.theta_at(std::sqrt(eta) * t)).norm() < 1e-4);
}

TEST_CASE("heavy-ball flow is not monotone near a strict minimum") {
  const Vec a = Vec::Ones(2), w = (Vec(2) << 0.5, 2.0).finished();
  const Model init((a.array() + 0.05).matrix(), w);
  const FlowTrajectory hb = heavy_ball_flow(base_flow(init, 40.0), 0.9, 1.0);
  bool increased = false;
  for (size_t k = 1; k < hb.loss_series.size(); ++k) increased = increased || hb.loss_series[k] > hb.loss_series[k - 1];
  CHECK(increased);
  CHECK(hb.loss_series.back() < hb.loss0);
}

TEST_CASE("linearized escape prediction") {
  const Model one(Vec::Ones(1), Vec::Ones(1));
  const MemoryKernel one_target = ExpSumKernel(Vec::Ones(1), Vec::Ones(1));
  REQUIRE(grad(one, one_target).norm() == 0.0);
  CHECK(std::isinf(linearized_escape_prediction(one, one_target, 1e-3).tau));

  std::mt19937_64 g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = testutil::random_model(g, 2);
    const auto p = linearized_escape_prediction(m, two_exp_target(), 1e-2);
    CHECK(p.tau > 0);
    CHECK(p.tau <= 1e-2 / (2 * p.grad_norm) * (1 + 1e-12));
    CHECK(p.mode_projections.norm() == doctest::Approx(p.grad_norm));
  }
}

TEST_CASE("delta warning") {
  FlowConfig cfg;
  cfg.delta = 0.1;
  CHECK(cfg.delta_warning());
  cfg.delta = 0.01;
  CHECK_FALSE(cfg.delta_warning());
}

TEST_CASE("two-rate loss is symmetric and matches the general closed form") {
  const std::pair<double, double> ws{1.0, 2.0};
  const MemoryKernel k = ExpSumKernel(Vec::Ones(2), (Vec(2) << 1.0, 2.0).finished());
  for (auto [w1, w2] : std::vector<std::pair<double, double>>{{0.3, 0.9}, {1.5, 0.2}, {2.0, 2.0}}) {
    CHECK(loss_2d(w1, w2, ws) == doctest::Approx(loss_2d(w2, w1, ws)));
    CHECK(loss_2d(w1, w2, ws) == doctest::Approx(loss(Model(Vec::Ones(2), (Vec(2) << w1, w2).finished()), k)));
  }
}

TEST_CASE("symmetric limit is a positive quartic root in (1, 2)") {
  const std::pair<double, double> ws{1.0, 2.0};
  CHECK(poly_eval(quartic_p(ws), 1.0) == doctest::Approx(10.0));
  CHECK(poly_eval(quartic_p(ws), 2.0) == doctest::Approx(-56.0));
  const Plateau2dResult r = flow_2d_symmetric(ws, 1e-3, 1e-5, 1e5);
  CHECK(r.v_limit > 1.0);
  CHECK(r.v_limit < 2.0);
  CHECK(std::abs(poly_eval(quartic_p(ws), r.v_limit)) < 1e-8);
  CHECK(std::abs(flow_1d_rhs(r.v_limit, ws)) < 1e-10);
  CHECK(r.gap_rate_at_limit > 0);
  REQUIRE(r.t_separation);
  REQUIRE(r.t_plateau);
}

TEST_CASE("symmetric initialization never separates") {
  const std::pair<double, double> ws{1.0, 2.0};
  const Plateau2dResult r = flow_2d_symmetric(ws, 1e-3, 0.0, 1e3);
  CHECK_FALSE(r.t_separation);
  for (const auto& y : r.ode.states) CHECK(y(1) == 0.0);
  CHECK(r.ode.states.back()(0) == doctest::Approx(r.v_limit).epsilon(1e-6));
}

TEST_CASE("quadratic escape agrees with the closed-form trajectories") {
  const double d0 = 0.01;
  for (double eps : {1e-2, 1e-3}) {
    const double di = eps;
    const QuadraticEscape gd = quadratic_escape(eps, di, d0, EscapeMethod::GradientFlow);
    const double t_gd = first_root(
        [&](double t) {
          const double x1 = di * std::exp(-t), x2 = std::exp(eps * t);
          return 0.5 * (x1 * x1 - eps * x2 * x2) - gd.threshold;
        },
        10 * gd.formula + 100);
    CHECK(gd.measured == doctest::Approx(t_gd).epsilon(1e-6));

    const QuadraticEscape mo = quadratic_escape(eps, di, d0, EscapeMethod::Momentum);
    const double se = std::sqrt(eps);
    const double t_mo = first_root(
        [&](double t) {
          const double x1 = di * (std::cos(t) - std::sin(t));
          const double x2 = std::cosh(se * t) + se * std::sinh(se * t);
          return 0.5 * (x1 * x1 - eps * x2 * x2) - mo.threshold;
        },
        10 * mo.formula + 100);
    CHECK(mo.measured == doctest::Approx(t_mo).epsilon(1e-6));
  }
}

TEST_CASE("quadratic escape formulas at small eps") {
  const QuadraticEscape gd = quadratic_escape(1e-4, 1e-4, 1e-2, EscapeMethod::GradientFlow);
  CHECK(gd.formula == doctest::Approx(std::log(100.0) / 2e-4));
  CHECK(gd.measured == doctest::Approx(gd.formula).epsilon(0.15));
  const QuadraticEscape mo = quadratic_escape(1e-4, 1e-4, 1e-2, EscapeMethod::Momentum);
  CHECK(mo.formula == doctest::Approx(50 * std::log(400.0)));
  CHECK(mo.measured == doctest::Approx(mo.formula).epsilon(0.15));
}

TEST_CASE("plateau detector on synthetic series") {
  std::vector<double> plateau;
  for (int i = 0; i < 100; ++i) plateau.push_back(i < 10 ? 1.0 - 0.05 * i : i < 70 ? 0.5 : 0.5 * std::exp(-0.1 * (i - 70)));
  const PlateauReport r = detect_plateau(plateau);
  CHECK(r.flagged);
  CHECK(r.duration >= 50);
  CHECK(r.end - r.start == r.duration);

  std::vector<double> decay;
  for (int i = 0; i < 100; ++i) decay.push_back(std::exp(-0.05 * i));
  CHECK_FALSE(detect_plateau(decay).flagged);

  std::vector<double> flat(100, 1.0);
  CHECK_FALSE(detect_plateau(flat).flagged);
}

TEST_CASE("trajectory table has one row per recorded knot") {
  const Model init((Vec(2) << 0.3, 1.5).finished(), (Vec(2) << 1.0, 3.0).finished());
  const FlowTrajectory tr = gradient_flow(base_flow(init, 5.0));
  const CsvTable t = trajectory_table(tr, 0.5);
  CHECK(t.rows.size() >= 10);
  CHECK(t.columns.size() == t.rows.front().size());
}
