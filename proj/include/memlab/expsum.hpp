#pragma once

#include <optional>

#include "memlab/kernels.hpp"

namespace memlab {

template <typename Scalar>
struct ExpSumModel {
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  VectorType a;
  VectorType w;

  ExpSumModel() = default;
  ExpSumModel(VectorType a_, VectorType w_) : a(std::move(a_)), w(std::move(w_)) {
    if (a.size() < 1 || a.size() != w.size()) throw InvalidModel("model: a and w must be non-empty and equal length");
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (!(w(i) > Scalar(0))) throw InvalidModel("model: rates w must be strictly positive");
  }

  Eigen::Index m() const { return a.size(); }

  // theta = (a_1..a_m, w_1..w_m)
  VectorType theta() const {
    VectorType t(2 * m());
    t << a, w;
    return t;
  }
  static ExpSumModel from_theta(const VectorType& t) {
    const Eigen::Index m = t.size() / 2;
    return ExpSumModel(t.head(m), t.tail(m));
  }

  Scalar operator()(Scalar t) const {
    using std::exp;
    Scalar acc(0);
    for (Eigen::Index i = 0; i < a.size(); ++i) acc += a(i) * exp(-w(i) * t);
    return acc;
  }
};

using Model = ExpSumModel<double>;

struct LossReport {
  double value = 0.0;
  Vec gradient;
  std::optional<Mat> hessian;
};

double loss(const Model& model, const MemoryKernel& target);
Vec grad(const Model& model, const MemoryKernel& target);
Mat hessian(const Model& model, const MemoryKernel& target);
double residual(const Model& model, const MemoryKernel& target, double t);
LossReport evaluate(const Model& model, const MemoryKernel& target, bool with_hessian = false);

// Unchecked variants on raw (a, w) used inside integrators, where trial stages may
// leave the positive orthant briefly. `target_norm_sq` avoids recomputing ||rho||^2.
double loss_raw(const Vec& a, const Vec& w, const MemoryKernel& target, double target_norm_sq);
void grad_raw(const Vec& a, const Vec& w, const MemoryKernel& target, Eigen::Ref<Vec> out);

// Gradient with respect to w only, a held fixed.
Vec grad_w(const Vec& a, const Vec& w, const MemoryKernel& target);

}  // namespace memlab
