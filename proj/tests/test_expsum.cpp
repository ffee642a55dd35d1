#include <doctest.h>

#include <numeric>

#include "memlab/expsum.hpp"
#include "oracle.hpp"

using namespace memlab;
using testutil::random_model;
using testutil::rel;
using testutil::simpson;

namespace {

double quad_loss(const Model& m, const MemoryKernel& k, double T) {
  return simpson(
      [&](double t) {
        const double r = m(t) - eval(k, t);
        return r * r;
      },
      0.0, T);
}

Vec fd_grad(const Model& m, const MemoryKernel& k, double h) {
  const Vec th = m.theta();
  Vec g(th.size());
  for (Eigen::Index i = 0; i < th.size(); ++i) {
    Vec p = th, q = th;
    p(i) += h;
    q(i) -= h;
    g(i) = (loss(Model::from_theta(p), k) - loss(Model::from_theta(q), k)) / (2 * h);
  }
  return g;
}

Mat fd_hessian(const Model& m, const MemoryKernel& k, double h) {
  const Vec th = m.theta();
  Mat H(th.size(), th.size());
  for (Eigen::Index i = 0; i < th.size(); ++i) {
    Vec p = th, q = th;
    p(i) += h;
    q(i) -= h;
    H.col(i) = (grad(Model::from_theta(p), k) - grad(Model::from_theta(q), k)) / (2 * h);
  }
  return H;
}

}  // namespace

TEST_CASE("single-term regression value") {
  const Model m(Vec::Ones(1), Vec::Ones(1));
  const MemoryKernel k = ExpSumKernel(Vec::Constant(1, 2.0), Vec::Constant(1, 2.0));
  CHECK(std::abs(loss(m, k) - 1.0 / 6.0) <= 1e-9);
  const Vec g = grad(m, k);
  CHECK(std::abs(g(0) + 1.0 / 3.0) <= 1e-8);
  CHECK(std::abs(g(1) + 1.0 / 18.0) <= 1e-8);
}

TEST_CASE("loss matches quadrature on seeded expsum pairs") {
  std::mt19937_64 g(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const Model m = random_model(g, 1 + trial % 6);
    const Model t = random_model(g, 1 + (trial / 6) % 6);
    const MemoryKernel k = ExpSumKernel(t.a, t.w);
    CHECK(rel(loss(m, k), quad_loss(m, k, 80.0)) <= 1e-9);
  }
}

TEST_CASE("loss matches quadrature against a composite target") {
  std::mt19937_64 g(5);
  for (double mu : {5.0, 12.0}) {
    const MemoryKernel k = CompositeKernel{ExpSumKernel(Vec::Ones(1), Vec::Ones(1)), GaussianBump(0.7, mu, 1.0)};
    const Model m = random_model(g, 3);
    CHECK(rel(loss(m, k), quad_loss(m, k, mu + 60.0)) <= 1e-9);
  }
}

TEST_CASE("gradient and hessian agree with finite differences") {
  std::mt19937_64 g(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Model m = random_model(g, 1 + trial % 6);
    const Model t = random_model(g, 1 + (trial * 7) % 6);
    const MemoryKernel k = ExpSumKernel(t.a, t.w);
    const Vec gr = grad(m, k);
    const Vec gf = fd_grad(m, k, 1e-6);
    CHECK((gr - gf).norm() <= 1e-4 * std::max(gf.norm(), 1e-3));
    const Mat H = hessian(m, k);
    const Mat Hf = fd_hessian(m, k, 1e-5);
    CHECK((H - Hf).norm() <= 1e-3 * std::max(Hf.norm(), 1e-3));
    CHECK((H - H.transpose()).norm() <= 1e-12 * H.norm());
  }
}

TEST_CASE("evaluate bundles the same quantities") {
  std::mt19937_64 g(3);
  const Model m = random_model(g, 4);
  const MemoryKernel k = ExpSumKernel(Vec::Ones(2), (Vec(2) << 0.5, 2.0).finished());
  const LossReport r = evaluate(m, k, true);
  CHECK(r.value == loss(m, k));
  CHECK(r.gradient == grad(m, k));
  REQUIRE(r.hessian);
  CHECK(*r.hessian == hessian(m, k));
}

TEST_CASE("permutation leaves the loss bit-identical and permutes the gradient") {
  std::mt19937_64 g(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + trial % 5;
    const Model x = random_model(g, m);
    const Model t = random_model(g, 3);
    const MemoryKernel k = CompositeKernel{ExpSumKernel(t.a, t.w), GaussianBump(0.5, 8.0, 1.0)};
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    Vec a(m), w(m);
    for (int i = 0; i < m; ++i) {
      a(i) = x.a(perm[i]);
      w(i) = x.w(perm[i]);
    }
    const Model y(a, w);
    CHECK(loss(x, k) == loss(y, k));
    const Vec gx = grad(x, k), gy = grad(y, k);
    for (int i = 0; i < m; ++i) {
      CHECK(gy(i) == gx(perm[i]));
      CHECK(gy(m + i) == gx(m + perm[i]));
    }
  }
}

TEST_CASE("exact fit has zero loss and zero gradient") {
  const Vec a = (Vec(3) << 1.0, -0.5, 2.0).finished();
  const Vec w = (Vec(3) << 0.4, 1.0, 3.0).finished();
  const MemoryKernel k = ExpSumKernel(a, w);
  const Model m(a, w);
  CHECK(std::abs(loss(m, k)) < 1e-14);
  CHECK(grad(m, k).norm() < 1e-13);
}

TEST_CASE("invalid models are rejected") {
  CHECK_THROWS_AS(Model(Vec::Ones(2), (Vec(2) << 1.0, 0.0).finished()), InvalidModel);
  CHECK_THROWS_AS(Model(Vec::Ones(2), Vec::Ones(3)), InvalidModel);
}

TEST_CASE("residual and grad_w are consistent with the full gradient") {
  std::mt19937_64 g(8);
  const Model m = random_model(g, 3);
  const MemoryKernel k = ExpSumKernel(Vec::Ones(1), Vec::Ones(1));
  CHECK(residual(m, k, 0.7) == doctest::Approx(m(0.7) - std::exp(-0.7)));
  CHECK((grad_w(m.a, m.w, k) - grad(m, k).tail(3)).norm() < 1e-14);
}
