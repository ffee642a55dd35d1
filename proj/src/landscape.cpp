#include <cmath>
#include <random>
#include <set>

#include "memlab/landscape.hpp"

namespace memlab {

void Partition::validate() const {
  if (universe < 1) throw DomainError("partition: empty universe");
  std::vector<int> seen(static_cast<size_t>(universe), 0);
  auto mark = [&](const std::vector<int>& block) {
    if (block.empty()) throw DomainError("partition: empty block");
    for (int i : block) {
      if (i < 0 || i >= universe) throw DomainError("partition: index out of range");
      if (seen[static_cast<size_t>(i)]++) throw DomainError("partition: blocks overlap");
    }
  };
  for (const auto& b : blocks) mark(b);
  for (const auto& b : zero_blocks) mark(b);
  for (int s : seen)
    if (!s) throw DomainError("partition: blocks do not cover the universe");
}

CriticalSpace::CriticalSpace(Partition p, Vec b, Vec v, Vec zr)
    : partition(std::move(p)), anchor_b(std::move(b)), anchor_v(std::move(v)), zero_rates(std::move(zr)) {
  partition.validate();
  if (anchor_b.size() != partition.d() || anchor_v.size() != partition.d())
    throw DomainError("critical space: anchor length must equal the number of blocks");
  if (zero_rates.size() != static_cast<Eigen::Index>(partition.zero_blocks.size()))
    throw DomainError("critical space: one rate per zero block");
  for (Eigen::Index i = 0; i < anchor_v.size(); ++i) {
    if (!(anchor_v(i) > 0)) throw DomainError("critical space: anchor rates must be positive");
    for (Eigen::Index j = 0; j < i; ++j)
      if (anchor_v(i) == anchor_v(j)) throw DomainError("critical space: anchor rates must be distinct");
  }
  for (Eigen::Index i = 0; i < zero_rates.size(); ++i)
    if (!(zero_rates(i) > 0)) throw DomainError("critical space: zero-block rates must be positive");
}

int CriticalSpace::dimension() const {
  int dim = 0;
  for (const auto& b : partition.blocks) dim += static_cast<int>(b.size()) - 1;
  for (const auto& b : partition.zero_blocks) dim += static_cast<int>(b.size()) - 1;
  return dim;
}

std::uint64_t stirling2(int m, int d) {
  if (m < 1 || d < 1 || d > m) throw DomainError("stirling2: need 1 <= d <= m");
  if (m > 20) throw Overflow("stirling2: m above the exact 64-bit cap of 20");
  std::vector<std::uint64_t> row(static_cast<size_t>(m) + 1, 0);
  row[0] = 1;  // {0, 0}
  for (int n = 1; n <= m; ++n) {
    for (int k = std::min(n, m); k >= 1; --k) row[k] = static_cast<std::uint64_t>(k) * row[k] + row[k - 1];
    row[0] = 0;
  }
  return row[static_cast<size_t>(d)];
}

std::uint64_t count_critical_spaces(int m, int d_max) {
  if (d_max < 1 || d_max > m) throw DomainError("count_critical_spaces: need 1 <= d_max <= m");
  std::uint64_t total = 0, fact = 1;
  for (int d = 1; d <= d_max; ++d) {
    std::uint64_t term;
    if (__builtin_mul_overflow(fact, static_cast<std::uint64_t>(d), &fact) ||
        __builtin_mul_overflow(fact, stirling2(m, d), &term) || __builtin_add_overflow(total, term, &total))
      throw Overflow("count_critical_spaces: count exceeds 64 bits");
  }
  return total;
}

std::vector<Partition> ordered_partitions(int m, int d) {
  if (m < 1 || d < 1 || d > m) throw DomainError("ordered_partitions: need 1 <= d <= m");
  std::vector<Partition> out;
  std::vector<int> label(static_cast<size_t>(m), 0);
  while (true) {
    std::vector<std::vector<int>> blocks(static_cast<size_t>(d));
    for (int i = 0; i < m; ++i) blocks[static_cast<size_t>(label[static_cast<size_t>(i)])].push_back(i);
    if (std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return !b.empty(); })) {
      Partition p;
      p.universe = m;
      p.blocks = std::move(blocks);
      out.push_back(std::move(p));
    }
    int pos = m - 1;
    while (pos >= 0 && label[static_cast<size_t>(pos)] == d - 1) label[static_cast<size_t>(pos--)] = 0;
    if (pos < 0) break;
    ++label[static_cast<size_t>(pos)];
  }
  return out;
}

double aigrain_williams_residual(const Vec& b, const Vec& v, const MemoryKernel& target) {
  double r = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    double l0 = 0.0, l1 = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double inv = 1.0 / (v(j) + v(i));
      l0 += b(i) * inv;
      l1 += b(i) * inv * inv;
    }
    r = std::max(r, std::abs(l0 - moment(target, 0, v(j))));
    r = std::max(r, std::abs(l1 - moment(target, 1, v(j))));
  }
  return r;
}

namespace {

// Damped Newton with eigenvalue-modified Hessian and a positivity-preserving backtracking search.
bool newton_polish(Vec& b, Vec& v, const MemoryKernel& target, double norm_sq, const AnchorOptions& opt) {
  const Eigen::Index d = b.size();
  double j = loss_raw(b, v, target, norm_sq);
  for (int it = 0; it < opt.max_iter; ++it) {
    const Model model(b, v);
    const Vec g = grad(model, target);
    if (!g.allFinite()) return false;
    if (aigrain_williams_residual(b, v, target) <= 1e-3 * opt.residual_tol) return true;
    const auto eig = sym_eig(hessian(model, target));
    const double scale = std::max(1e-300, eig.eigenvalues.cwiseAbs().maxCoeff());
    Vec coeff = eig.eigenvectors.transpose() * g;
    for (Eigen::Index k = 0; k < coeff.size(); ++k)
      coeff(k) /= std::max(std::abs(eig.eigenvalues(k)), 1e-14 * scale);
    const Vec step = -(eig.eigenvectors * coeff);

    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Vec nb = b + t * step.head(d);
      const Vec nv = v + t * step.tail(d);
      if (nv.minCoeff() <= 0 || !nv.allFinite()) continue;
      const double nj = loss_raw(nb, nv, target, norm_sq);
      // Near the optimum the loss is flat to rounding; accept steps that do not make it worse.
      if (nj <= j + 1e-14 * (1.0 + std::abs(j))) {
        b = nb;
        v = nv;
        j = nj;
        moved = true;
        break;
      }
    }
    if (!moved) return aigrain_williams_residual(b, v, target) <= opt.residual_tol;
  }
  return aigrain_williams_residual(b, v, target) <= opt.residual_tol;
}

}  // namespace

AnchorFit find_nondegenerate_min(const MemoryKernel& target, int d, std::uint64_t seed, const AnchorOptions& opt) {
  if (d < 1) throw DomainError("find_nondegenerate_min: d must be positive");
  AnchorFit best;
  const double norm_sq = l2_norm_sq(target);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> logv(std::log(opt.v_lo), std::log(opt.v_hi));

  for (int s = 0; s < opt.starts; ++s) {
    std::vector<double> vs(static_cast<size_t>(d));
    for (double& x : vs) x = std::exp(logv(rng));
    std::sort(vs.begin(), vs.end());
    Vec v = Eigen::Map<Vec>(vs.data(), d);
    // Coefficients from the linear least-squares problem at fixed rates.
    Mat g(d, d);
    Vec rhs(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      rhs(i) = moment(target, 0, v(i));
      for (Eigen::Index k = 0; k < d; ++k) g(i, k) = 1.0 / (v(i) + v(k));
    }
    Vec b = g.colPivHouseholderQr().solve(rhs);
    if (!b.allFinite()) continue;

    if (!newton_polish(b, v, target, norm_sq, opt)) continue;
    ++best.converged_starts;

    std::vector<Eigen::Index> order(static_cast<size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return v(x) < v(y); });
    Vec bs(d), vs2(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      bs(i) = b(order[static_cast<size_t>(i)]);
      vs2(i) = v(order[static_cast<size_t>(i)]);
    }
    bool degenerate = false;
    const double bmax = bs.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(bs(i)) <= 1e-8 * std::max(1.0, bmax)) degenerate = true;
      if (i > 0 && vs2(i) - vs2(i - 1) <= 1e-6 * vs2(i)) degenerate = true;
    }
    if (degenerate) continue;
    const double j = std::max(0.0, loss_raw(bs, vs2, target, norm_sq));
    if (!best.found || j < best.loss) {
      best.found = true;
      best.b = bs;
      best.v = vs2;
      best.loss = j;
      best.aw_residual = aigrain_williams_residual(bs, vs2, target);
    }
  }
  return best;
}

Model lift(const CriticalSpace& space, const Vec& free_coords, const MemoryKernel& target, double anchor_tol) {
  if (free_coords.size() != space.dimension())
    throw DomainError("lift: expected " + std::to_string(space.dimension()) + " free coordinates");
  const double res = aigrain_williams_residual(space.anchor_b, space.anchor_v, target);
  if (!(res <= anchor_tol))
    throw AnchorNotCritical("lift: anchor Aigrain-Williams residual " + std::to_string(res));

  const int m = space.partition.universe;
  Vec a(m), w(m);
  Eigen::Index k = 0;
  auto fill = [&](const std::vector<int>& block, double total, double rate) {
    double used = 0.0;
    for (size_t i = 0; i + 1 < block.size(); ++i) {
      a(block[i]) = free_coords(k++);
      used += a(block[i]);
    }
    a(block.back()) = total - used;
    for (int i : block) w(i) = rate;
  };
  for (int j = 0; j < space.partition.d(); ++j)
    fill(space.partition.blocks[static_cast<size_t>(j)], space.anchor_b(j), space.anchor_v(j));
  for (size_t r = 0; r < space.partition.zero_blocks.size(); ++r)
    fill(space.partition.zero_blocks[r], 0.0, space.zero_rates(static_cast<Eigen::Index>(r)));
  return Model(a, w);
}

SpaceHessian hessian_on_space(const CriticalSpace& space, const Vec& free_coords, const MemoryKernel& target) {
  const Model point = lift(space, free_coords, target);
  SpaceHessian h;
  h.grad_norm = grad(point, target).norm();
  h.eigenvalues = sym_eig(hessian(point, target)).eigenvalues;
  h.threshold = kZeroEigRel * h.eigenvalues.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < h.eigenvalues.size(); ++i) {
    if (std::abs(h.eigenvalues(i)) > h.threshold) ++h.rank;
    else ++h.zero_count;
  }
  return h;
}

std::string label_name(Label2d l) {
  switch (l) {
    case Label2d::Saddle: return "saddle";
    case Label2d::DegenerateStable: return "degenerate-stable";
    case Label2d::Indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

Classification2d classify_2d(const ExpSumKernel& target, const std::vector<double>& a1_fractions, std::uint64_t seed) {
  if (target.coeffs.size() != 2 || !target.nondegenerate() || !(target.rates(0) < target.rates(1)))
    throw DomainError("classify_2d: need a non-degenerate two-term target with w1* < w2*");
  const MemoryKernel k{target};
  const AnchorFit fit = find_nondegenerate_min(k, 1, seed);
  if (!fit.found) throw AnchorNotCritical("classify_2d: no non-degenerate minimizer of J_1 found");

  Classification2d out;
  out.a_hat = fit.b(0);
  out.w_hat = fit.v(0);
  Partition p;
  p.universe = 2;
  p.blocks = {{0, 1}};
  const CriticalSpace space(p, fit.b, fit.v);
  // Same-sign targets with w2*/w1* >= 2 + sqrt(3) fall outside both classified regimes.
  const bool unclassified =
      target.coeffs(0) * target.coeffs(1) > 0 && target.rates(1) / target.rates(0) >= 2.0 + std::sqrt(3.0);
  for (double frac : a1_fractions) {
    Vec free(1);
    free << frac * out.a_hat;
    const SpaceHessian h = hessian_on_space(space, free, k);
    Classified2d c;
    c.a1 = free(0);
    c.min_eig = h.eigenvalues(h.eigenvalues.size() - 1);
    c.threshold = h.threshold;
    if (unclassified) c.label = Label2d::Indeterminate;
    else if (c.min_eig < -10.0 * h.threshold) c.label = Label2d::Saddle;
    else if (std::abs(c.min_eig) <= h.threshold) c.label = Label2d::DegenerateStable;
    else c.label = Label2d::Indeterminate;
    out.points.push_back(c);
  }
  return out;
}

Json space_json(const CriticalSpace& space, const SpaceHessian& h) {
  Json j;
  j["blocks"] = space.partition.blocks;
  j["d"] = space.partition.d();
  j["anchor"] = {{"b", std::vector<double>(space.anchor_b.data(), space.anchor_b.data() + space.anchor_b.size())},
                 {"v", std::vector<double>(space.anchor_v.data(), space.anchor_v.data() + space.anchor_v.size())}};
  j["grad_norm"] = h.grad_norm;
  j["eigen"] = {{"rank", h.rank},
                {"zero_count", h.zero_count},
                {"threshold", h.threshold},
                {"min", h.eigenvalues(h.eigenvalues.size() - 1)},
                {"max", h.eigenvalues(0)}};
  return j;
}

}  // namespace memlab
