#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "memlab/rnnsim.hpp"

namespace memlab {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(splitmix(splitmix(seed) ^ stream)) {}

CounterRng::result_type CounterRng::operator()() { return splitmix(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

LinearRNN::LinearRNN(Vec c_, Mat W_, Vec U_) : c(std::move(c_)), W(std::move(W_)), U(std::move(U_)) {
  if (W.rows() != W.cols() || W.rows() != c.size() || U.size() != c.size())
    throw DomainError("LinearRNN: dimension mismatch");
  Eigen::EigenSolver<Mat> es(W, false);
  max_real_part = es.eigenvalues().real().maxCoeff();
  hurwitz = max_real_part < -1e-10;
}

double LinearRNN::kernel(double t) const { return c.dot(mat_exp(W, t) * U); }

LinearRNN LinearRNN::diagonal(const Model& model) {
  return LinearRNN(Vec::Ones(model.m()), Mat((-model.w).asDiagonal()), model.a);
}

std::vector<double> PathEnsemble::path(long index) const {
  CounterRng rng(seed, static_cast<std::uint64_t>(index));
  const long k = steps();
  std::vector<double> x(static_cast<size_t>(k));
  if (kind == InputKind::WhiteNoise) {
    std::normal_distribution<double> n(0.0, std::sqrt(dt));
    for (double& v : x) v = n(rng);
    return x;
  }
  std::normal_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> freq(0.0, 10.0);
  std::vector<double> a(static_cast<size_t>(cos_terms)), l(static_cast<size_t>(cos_terms));
  for (int j = 0; j < cos_terms; ++j) {
    a[static_cast<size_t>(j)] = amp(rng);
    l[static_cast<size_t>(j)] = freq(rng);
  }
  for (long i = 0; i < k; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cos_terms; ++j) acc += a[static_cast<size_t>(j)] * std::cos(l[static_cast<size_t>(j)] * i * dt);
    x[static_cast<size_t>(i)] = acc;
  }
  return x;
}

std::vector<double> simulate(const LinearRNN& rnn, const std::vector<double>& x, double dt) {
  Vec h = Vec::Zero(rnn.m());
  std::vector<double> y;
  y.reserve(x.size() + 1);
  y.push_back(0.0);
  for (double xk : x) {
    h += dt * (rnn.W * h + rnn.U * xk);
    y.push_back(rnn.c.dot(h));
  }
  return y;
}

double closedform_finite_loss(const LinearRNN& rnn, const MemoryKernel& target, double T) {
  if (!(T > 0)) throw DomainError("closedform_finite_loss: T must be positive");
  QuadOptions opt;
  opt.abs_tol = 1e-12;
  if (const auto* c = std::get_if<CompositeKernel>(&target)) opt.breakpoints = {c->bump.center};
  if (const auto* b = std::get_if<GaussianBump>(&target)) opt.breakpoints = {b->center};
  auto f = [&](double t) {
    const double r = rnn.kernel(t) - eval(target, t);
    return r * r;
  };
  return integrate(f, 0.0, T, opt).value;
}

McEstimate mc_loss(const LinearRNN& rnn, const MemoryKernel& target, const PathEnsemble& ens) {
  if (ens.kind != InputKind::WhiteNoise) throw DomainError("mc_loss: requires white-noise input");
  const long k = ens.steps();
  // Kernel mismatch at s_j = j dt; the increment feeding lag s_j is dB_{K-1-j}.
  std::vector<double> diff(static_cast<size_t>(k));
  const Mat step = mat_exp(rnn.W, ens.dt);
  Vec v = rnn.U;
  for (long j = 0; j < k; ++j) {
    diff[static_cast<size_t>(j)] = rnn.c.dot(v) - eval(target, j * ens.dt);
    v = step * v;
  }
  McEstimate est;
  est.n = ens.n_paths;
  double mean = 0.0, m2 = 0.0;
  for (long p = 0; p < ens.n_paths; ++p) {
    const auto db = ens.path(p);
    double e = 0.0;
    for (long j = 0; j < k; ++j) e += diff[static_cast<size_t>(j)] * db[static_cast<size_t>(k - 1 - j)];
    const double sq = e * e;
    const double delta = sq - mean;
    mean += delta / static_cast<double>(p + 1);
    m2 += delta * (sq - mean);
  }
  est.mean = mean;
  est.std_error = ens.n_paths > 1 ? std::sqrt(m2 / static_cast<double>(ens.n_paths - 1) / ens.n_paths) : 0.0;
  return est;
}

double DiscreteLoss::grad_norm() const {
  return std::sqrt(grad_c.squaredNorm() + grad_W.squaredNorm() + grad_U.squaredNorm());
}

std::vector<double> sample_kernel(const MemoryKernel& target, double dt, long steps) {
  std::vector<double> r(static_cast<size_t>(steps));
  for (long k = 0; k < steps; ++k) r[static_cast<size_t>(k)] = eval(target, k * dt);
  return r;
}

DiscreteLoss discrete_loss(const LinearRNN& rnn, const std::vector<double>& rho, double dt, bool with_grad) {
  const Eigen::Index m = rnn.m();
  const long K = static_cast<long>(rho.size());
  const Mat A = Mat::Identity(m, m) + dt * rnn.W;

  Mat h(m, K);  // h_k = A^k U
  h.col(0) = rnn.U;
  for (long k = 1; k < K; ++k) h.col(k).noalias() = A * h.col(k - 1);
  const Eigen::RowVectorXd kern = rnn.c.transpose() * h;

  DiscreteLoss out;
  Eigen::RowVectorXd e(K);
  for (long k = 0; k < K; ++k) {
    const double r = kern(k) - rho[static_cast<size_t>(k)];
    out.value += dt * r * r;
    e(k) = 2.0 * dt * r;
  }
  if (!with_grad) return out;

  out.grad_c = h * e.transpose();
  // Adjoint sweep: lambda_k = e_k c + A^T lambda_{k+1}.
  Mat lambda(m, K);
  lambda.col(K - 1) = e(K - 1) * rnn.c;
  for (long k = K - 2; k >= 0; --k) lambda.col(k).noalias() = e(k) * rnn.c + A.transpose() * lambda.col(k + 1);
  out.grad_U = lambda.col(0);
  const Mat gA = lambda.rightCols(K - 1) * h.leftCols(K - 1).transpose();
  out.grad_W = dt * gA;
  return out;
}

TrainRecord gd_train(const LinearRNN& rnn0, const MemoryKernel& target, const TrainOptions& opt) {
  const long K = std::lround(opt.horizon / opt.dt);
  const auto rho = sample_kernel(target, opt.dt, K);
  TrainRecord rec;
  rec.loss.reserve(static_cast<size_t>(opt.steps));
  Vec c = rnn0.c, U = rnn0.U;
  Mat W = rnn0.W;
  Vec vc = Vec::Zero(c.size()), vU = Vec::Zero(U.size());
  Mat vW = Mat::Zero(W.rows(), W.cols());
  const double mu = opt.optimizer == Optimizer::HeavyBall ? opt.momentum : 0.0;
  const double scale = opt.time_average ? 1.0 / (static_cast<double>(K) * opt.dt) : 1.0;

  LinearRNN cur = rnn0;
  for (long it = 0; it < opt.steps; ++it) {
    cur.c = c;
    cur.W = W;
    cur.U = U;
    DiscreteLoss l = discrete_loss(cur, rho, opt.dt);
    l.value *= scale;
    l.grad_c *= scale;
    l.grad_W *= scale;
    l.grad_U *= scale;
    if (!std::isfinite(l.value) || (!rec.loss.empty() && l.value > opt.diverge_factor * rec.loss.front()))
      throw Diverged("gd_train: loss " + format_double(l.value) + " at step " + std::to_string(it));
    rec.loss.push_back(l.value);
    rec.grad_norm.push_back(l.grad_norm());
    vc = mu * vc - opt.lr * l.grad_c;
    vW = mu * vW - opt.lr * l.grad_W;
    vU = mu * vU - opt.lr * l.grad_U;
    c += vc;
    W += vW;
    U += vU;
  }
  rec.final_rnn = LinearRNN(c, W, U);
  rec.plateau = detect_plateau(rec.loss);
  return rec;
}

LinearRNN random_rnn(const RnnInit& init, std::uint64_t seed) {
  const int m = init.m;
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    CounterRng rng(seed, attempt);
    std::uniform_real_distribution<double> decay(init.decay_lo, init.decay_hi);
    std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
    Mat W(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (i != j) W(i, j) = init.offdiag_scale * n(rng);
        else if (init.decay_grid) W(i, j) = -(init.decay_lo + (init.decay_hi - init.decay_lo) * i / std::max(1, m - 1));
        else W(i, j) = -decay(rng);
      }
    Vec c(m), U(m);
    const double mag = init.io_scale / std::sqrt(static_cast<double>(m));
    auto io = [&] { return init.io == IoInit::Normal ? init.io_scale * n(rng) : (rng() & 1 ? mag : -mag); };
    for (int i = 0; i < m; ++i) c(i) = io();
    if (init.io == IoInit::Matched) U = c;
    else for (int i = 0; i < m; ++i) U(i) = io();
    LinearRNN r(c, W, U);
    const Mat A = Mat::Identity(m, m) + init.dt * W;
    Eigen::EigenSolver<Mat> es(A, false);
    if (r.hurwitz && es.eigenvalues().cwiseAbs().maxCoeff() < 1.0) return r;
  }
  throw DomainError("random_rnn: no stable draw in 1000 attempts");
}

Model gd_closed_form(const Model& init, const MemoryKernel& target, double lr, long steps) {
  Vec th = init.theta();
  const Eigen::Index m = init.m();
  Vec g(2 * m);
  for (long k = 0; k < steps; ++k) {
    grad_raw(th.head(m), th.tail(m), target, g);
    th -= lr * g;
  }
  return Model::from_theta(th);
}

CsvTable training_table(const TrainRecord& rec) {
  CsvTable t;
  t.columns = {"step", "loss", "grad_norm"};
  for (size_t k = 0; k < rec.loss.size(); ++k)
    t.add({static_cast<long long>(k), rec.loss[k], rec.grad_norm[k]});
  return t;
}

}  // namespace memlab
