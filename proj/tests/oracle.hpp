#pragma once

#include <cmath>
#include <random>

#include "memlab/expsum.hpp"

namespace testutil {

// Composite Simpson on [0, T]; the test oracle for every integral the library does in closed form.
template <typename F>
double simpson(F f, double a, double b, int n = 200000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double rel(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

inline memlab::Model random_model(std::mt19937_64& g, int m, double w_lo = 0.3, double w_hi = 3.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(w_lo, w_hi);
  memlab::Vec a(m), w(m);
  for (int i = 0; i < m; ++i) {
    a(i) = n(g);
    w(i) = u(g);
  }
  return {a, w};
}

}  // namespace testutil
