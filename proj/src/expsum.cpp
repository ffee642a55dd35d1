#include <numeric>

#include "memlab/expsum.hpp"

namespace memlab {

namespace {

// Summation order sorted by (w, a), so permuting the model leaves every sum bit-identical.
std::vector<Eigen::Index> canonical_order(const Vec& a, const Vec& w) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(a.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index i, Eigen::Index j) {
    return w(i) != w(j) ? w(i) < w(j) : a(i) < a(j);
  });
  return idx;
}

}  // namespace

double loss_raw(const Vec& a, const Vec& w, const MemoryKernel& target, double target_norm_sq) {
  const auto idx = canonical_order(a, w);
  double quad = 0.0, cross = 0.0;
  for (Eigen::Index i : idx) {
    for (Eigen::Index j : idx) quad += a(i) * a(j) / (w(i) + w(j));
    cross += a(i) * moment(target, 0, w(i));
  }
  return quad - 2.0 * cross + target_norm_sq;
}

void grad_raw(const Vec& a, const Vec& w, const MemoryKernel& target, Eigen::Ref<Vec> out) {
  const Eigen::Index m = a.size();
  const auto idx = canonical_order(a, w);
  for (Eigen::Index k = 0; k < m; ++k) {
    double s1 = 0.0, s2 = 0.0;
    for (Eigen::Index i : idx) {
      const double d = 1.0 / (w(k) + w(i));
      s1 += a(i) * d;
      s2 += a(i) * d * d;
    }
    out(k) = 2.0 * (s1 - moment(target, 0, w(k)));
    out(m + k) = -2.0 * a(k) * (s2 - moment(target, 1, w(k)));
  }
}

Vec grad_w(const Vec& a, const Vec& w, const MemoryKernel& target) {
  Vec g(2 * a.size());
  grad_raw(a, w, target, g);
  return g.tail(a.size());
}

double loss(const Model& model, const MemoryKernel& target) {
  return std::max(0.0, loss_raw(model.a, model.w, target, l2_norm_sq(target)));
}

Vec grad(const Model& model, const MemoryKernel& target) {
  Vec g(2 * model.m());
  grad_raw(model.a, model.w, target, g);
  return g;
}

Mat hessian(const Model& model, const MemoryKernel& target) {
  const Eigen::Index m = model.m();
  const Vec& a = model.a;
  const Vec& w = model.w;
  const auto idx = canonical_order(a, w);
  Mat h = Mat::Zero(2 * m, 2 * m);
  for (Eigen::Index k = 0; k < m; ++k) {
    double s2 = 0.0, s3 = 0.0;
    for (Eigen::Index i : idx) {
      const double d = 1.0 / (w(k) + w(i));
      s2 += a(i) * d * d;
      s3 += a(i) * d * d * d;
    }
    const double t1 = moment(target, 1, w(k));
    const double t2 = moment(target, 2, w(k));
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = 1.0 / (w(k) + w(j));
      h(k, j) = 2.0 * d;
      if (j != k) {
        h(k, m + j) = -2.0 * a(j) * d * d;
        h(m + k, m + j) = 4.0 * a(k) * a(j) * d * d * d;
      }
    }
    h(k, m + k) = -2.0 * (s2 - t1) - a(k) / (2.0 * w(k) * w(k));
    h(m + k, m + k) = 4.0 * a(k) * (s3 - 0.5 * t2) + a(k) * a(k) / (2.0 * w(k) * w(k) * w(k));
  }
  h.bottomLeftCorner(m, m) = h.topRightCorner(m, m).transpose();
  return h;
}

double residual(const Model& model, const MemoryKernel& target, double t) {
  if (!(t >= 0)) throw DomainError("residual: t must be non-negative");
  return model(t) - eval(target, t);
}

LossReport evaluate(const Model& model, const MemoryKernel& target, bool with_hessian) {
  LossReport r;
  r.value = loss(model, target);
  r.gradient = grad(model, target);
  if (with_hessian) r.hessian = hessian(model, target);
  return r;
}

}  // namespace memlab
