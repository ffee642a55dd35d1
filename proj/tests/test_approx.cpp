#include <doctest.h>

#include "memlab/approx.hpp"
#include "oracle.hpp"

using namespace memlab;

namespace {

MemoryKernel one_exp() { return ExpSumKernel(Vec::Ones(1), Vec::Ones(1)); }
MemoryKernel smooth_two_exp() { return ExpSumKernel(Vec::Ones(2), (Vec(2) << 1.0, 3.0).finished()); }

}  // namespace

TEST_CASE("single exponential is represented exactly when the rate matches") {
  for (int m = 1; m <= 6; ++m) {
    const RateConstruction rc = rate_construct(one_exp(), 1, 2.0, m);
    CHECK(l1_error(rc, one_exp()) <= 1e-10);
    CHECK(rc(0.7) == doctest::Approx(std::exp(-0.7)).epsilon(1e-12));
  }
}

TEST_CASE("rates are negative, distinct and one per coefficient") {
  const RateConstruction rc = rate_construct(smooth_two_exp(), 1, 1.0, 8);
  CHECK(rc.rates.size() == 8);
  CHECK(rc.u.size() == 8);
  CHECK(rc.c.size() == 8);
  for (int k = 0; k < 8; ++k) {
    CHECK(rc.rates(k) < 0);
    CHECK(rc.rates(k) == doctest::Approx(-(k + 1) * 0.5));
  }
}

TEST_CASE("construction equals the recurrent functional form") {
  for (int m : {1, 3, 5, 8}) {
    const RateConstruction rc = rate_construct(smooth_two_exp(), 1, 1.0, m);
    const Mat W = rc.w_matrix();
    for (int i = 0; i < 50; ++i) {
      const double t = 0.2 * i;
      CHECK(std::abs(rc(t) - rc.c.dot(mat_exp(W, t) * rc.u)) <= 1e-10);
    }
  }
}

TEST_CASE("L1 error shrinks with width at roughly the predicted rate") {
  std::vector<double> lm, le;
  double prev = std::numeric_limits<double>::infinity();
  for (int m : {4, 8, 16, 32}) {
    const double e = l1_error(rate_construct(smooth_two_exp(), 1, 1.5, m), smooth_two_exp());
    CHECK(e < prev);
    prev = e;
    lm.push_back(std::log(m));
    le.push_back(std::log(e));
  }
  CHECK(fit_line(lm, le).slope <= -0.85);
}

TEST_CASE("beta = 1 makes the two-exponential target a polynomial in s") {
  // e^{-t} + e^{-3t} = s^2 + s^6 with s = e^{-t/2}, so width 6 is already exact.
  CHECK(l1_error(rate_construct(smooth_two_exp(), 1, 1.0, 4), smooth_two_exp()) > 1e-3);
  for (int m : {6, 8, 16, 32}) CHECK(l1_error(rate_construct(smooth_two_exp(), 1, 1.0, m), smooth_two_exp()) <= 1e-10);
}

TEST_CASE("L1 error against a quadrature oracle") {
  const RateConstruction rc = rate_construct(smooth_two_exp(), 1, 1.0, 6);
  const double want = testutil::simpson([&](double t) { return std::abs(eval(smooth_two_exp(), t) - rc(t)); }, 0.0, 80.0, 800000);
  CHECK(l1_error(rc, smooth_two_exp()) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("L1 error bounds the functional error for bounded inputs") {
  const RateConstruction rc = rate_construct(smooth_two_exp(), 1, 1.0, 4);
  const double bound = l1_error(rc, smooth_two_exp());
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(400);
    for (double& v : x) v = u(g);
    // x piecewise constant on unit-0.1 cells of the lag axis
    const double err = testutil::simpson(
        [&](double s) {
          const size_t cell = std::min<size_t>(x.size() - 1, static_cast<size_t>(s / 0.1));
          return (eval(smooth_two_exp(), s) - rc(s)) * x[cell];
        },
        0.0, 40.0, 400000);
    CHECK(std::abs(err) <= bound);
  }
}

TEST_CASE("decay precheck rejects too large beta") {
  CHECK_THROWS_AS(rate_construct(one_exp(), 1, 4.0, 4), DecayViolation);
  CHECK_THROWS_AS(rate_construct(one_exp(), 1, 1.0, 65), IllConditioned);
}

TEST_CASE("power-law truncation tail") {
  const PowerLawKernel p(2.0, 1.0);
  const TruncationResult r = truncate_and_bound(p, 9.0);
  CHECK(r.tail_bound == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(r.trunc_error <= r.tail_bound);
  CHECK(r.trunc_error > 0.9 * r.tail_bound);
  double prev = r.tail_bound;
  for (double T : {12.0, 20.0, 50.0}) {
    const double tb = truncate_and_bound(p, T).tail_bound;
    CHECK(tb < prev);
    prev = tb;
  }
  const MemoryKernel tk = r.kernel;
  CHECK(eval(tk, 5.0) == eval(MemoryKernel{p}, 5.0));
}

TEST_CASE("truncated power law construction succeeds with beta = 2 / T") {
  const TruncationResult r = truncate_and_bound(PowerLawKernel(2.0, 1.0), 10.0);
  const MemoryKernel k = r.kernel;
  const RateConstruction rc = rate_construct(k, 1, 2.0 / 10.0, 16);
  CHECK(std::isfinite(l1_error(rc, k)));
}

TEST_CASE("minimum width") {
  CHECK(min_width(one_exp(), 0.5) == 1);
  const MemoryKernel p = PowerLawKernel(2.0, 1.0);
  const int loose = min_width(p, 0.2);
  const int tight = min_width(p, 0.1);
  CHECK(loose <= tight);
  WidthOptions opt;
  opt.m_cap = 4;
  CHECK_THROWS_AS(min_width(p, 1e-3, opt), CapExceeded);
}

TEST_CASE("width curve is non-increasing in m") {
  WidthOptions opt;
  opt.stop_at_first = false;
  opt.m_cap = 16;
  for (const MemoryKernel& k : {smooth_two_exp(), MemoryKernel{PowerLawKernel(2.0, 1.0)}}) {
    const WidthSweep sw = min_width_sweep(k, 1e-3, opt);
    // Past exact representation the totals are roundoff, hence the absolute floor.
    for (size_t i = 1; i < sw.curve.size(); ++i) CHECK(sw.curve[i].total <= sw.curve[i - 1].total * (1 + 1e-9) + 1e-14);
  }
}
