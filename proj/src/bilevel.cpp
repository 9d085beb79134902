#include "dcond/bilevel.hpp"

#include "dcond/error.hpp"

#include <cmath>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd central_difference(const std::function<double(const MatrixXd&)>& f, const MatrixXd& x, double step) {
  MatrixXd probe = x;
  MatrixXd g(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) {
      const double keep = probe(i, j);
      probe(i, j) = keep + step;
      const double up = f(probe);
      probe(i, j) = keep - step;
      const double down = f(probe);
      probe(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * step);
    }
  return g;
}

Mlp unroll(const Mlp& m, const MatrixXd& x, const Labels& y, Loss loss, int steps, double lr,
           const MatrixXd* frozen_x, int frozen_steps) {
  VectorXd theta = m.flat_params();
  Mlp cur = m;
  for (int k = 0; k < frozen_steps + steps; ++k) {
    const MatrixXd& batch = (k < frozen_steps && frozen_x) ? *frozen_x : x;
    theta -= lr * cur.backward(batch, y, loss).params;
    require(theta.allFinite(), ErrorKind::divergence, "inner training diverged at step " + std::to_string(k));
    cur = cur.with_params(theta);
  }
  return cur;
}

BpttObjective::BpttObjective(Mlp theta0, LabeledDataset t, Labels s_labels, BpttOptions options)
    : theta0_(std::move(theta0)), t_(std::move(t)), s_labels_(std::move(s_labels)), options_(options) {
  require(options_.inner_steps >= 1, ErrorKind::config, "inner_steps must be >= 1");
}

double BpttObjective::outer(const MatrixXd& s, double eta, int prefix, const MatrixXd& s_base,
                            const MatrixXd& t_eval) const {
  Mlp m = unroll(theta0_, s, s_labels_, options_.loss, options_.inner_steps, eta, &s_base, prefix);
  double v = mean_loss(m, t_eval, t_.labels(), options_.loss);
  if (options_.curvature) {
    LabeledDataset at(t_eval, t_.labels(), t_.class_count());
    v += *options_.curvature * lambda_max_estimate(m, at, options_.loss, options_.power_iters, options_.power_seed);
  }
  return v;
}

MatrixXd BpttObjective::attacked_real(const MatrixXd& s, double eta, int prefix) const {
  if (!options_.robust || options_.robust->epsilon == 0.0) return t_.features();
  Mlp m = unroll(theta0_, s, s_labels_, options_.loss, options_.inner_steps, eta, &s, prefix);
  const double eps = options_.robust->epsilon;
  const int steps = options_.robust->steps;
  return pgd_attack_batch(m, t_.features(), t_.labels(), eps, steps, 2.5 * eps / steps, options_.loss);
}

double BpttObjective::value(const MatrixXd& s, double eta, int prefix) const {
  return outer(s, eta, prefix, s, attacked_real(s, eta, prefix));
}

BpttResult BpttObjective::evaluate(const MatrixXd& s, double eta, int prefix) const {
  require(s.rows() == static_cast<Index>(s_labels_.size()), ErrorKind::shape, "one label per synthetic row");
  const MatrixXd t_eval = attacked_real(s, eta, prefix);
  BpttResult r;
  r.value = outer(s, eta, prefix, s, t_eval);
  const double h = options_.fd_step;
  r.grad_s = central_difference([&](const MatrixXd& x) { return outer(x, eta, prefix, s, t_eval); }, s, h);
  r.grad_eta = (outer(s, eta + h, prefix, s, t_eval) - outer(s, eta - h, prefix, s, t_eval)) / (2.0 * h);
  require(std::isfinite(r.value) && r.grad_s.allFinite() && std::isfinite(r.grad_eta), ErrorKind::divergence,
          "non-finite unrolled objective");
  return r;
}

TrajectoryObjective::TrajectoryObjective(Mlp theta0, const LabeledDataset& t, TrainConfig cfg)
    : theta0_(std::move(theta0)), cfg_(cfg) {
  expert_ = *sgd_train(theta0_, t.class_major(), cfg_, true).trajectory;
}

Trajectory TrajectoryObjective::student(const MatrixXd& s, const Labels& labels) const {
  return *sgd_train(theta0_, s, labels, cfg_, true).trajectory;
}

double TrajectoryObjective::value(const MatrixXd& s, const Labels& labels) const {
  const Trajectory st = student(s, labels);
  require(st.snapshots.size() == expert_.snapshots.size(), ErrorKind::shape, "trajectory lengths differ");
  double total = 0.0;
  for (std::size_t k = 0; k < st.snapshots.size(); ++k) total += (st.snapshots[k] - expert_.snapshots[k]).norm();
  return total;
}

MatrixXd TrajectoryObjective::gradient(const MatrixXd& s, const Labels& labels, double step) const {
  return central_difference([&](const MatrixXd& x) { return value(x, labels); }, s, step);
}

namespace {

MatrixXd with_bias(const MatrixXd& x, bool bias) {
  if (!bias) return x;
  MatrixXd out(x.rows(), x.cols() + 1);
  out << x, MatrixXd::Ones(x.rows(), 1);
  return out;
}

void check_cig(const MatrixXd& xs, const MatrixXd& ys, const MatrixXd& xt, const MatrixXd& yt, double lambda) {
  require(lambda > 0.0, ErrorKind::config, "implicit ridge gradient needs lambda > 0");
  require(xs.rows() == ys.rows() && xt.rows() == yt.rows() && xs.cols() == xt.cols() && ys.cols() == yt.cols(),
          ErrorKind::shape, "ridge problem shape mismatch");
}

}  // namespace

double cig_ridge_outer(const MatrixXd& xs, const MatrixXd& ys, const MatrixXd& xt, const MatrixXd& yt,
                       double lambda, bool bias) {
  check_cig(xs, ys, xt, yt, lambda);
  const MatrixXd x = with_bias(xs, bias);
  MatrixXd h = x.transpose() * x;
  h.diagonal().array() += lambda;
  const MatrixXd w = h.ldlt().solve(x.transpose() * ys);
  return (with_bias(xt, bias) * w - yt).squaredNorm() / static_cast<double>(xt.rows());
}

CigResult cig_ridge(const MatrixXd& xs, const MatrixXd& ys, const MatrixXd& xt, const MatrixXd& yt, double lambda,
                    bool bias) {
  check_cig(xs, ys, xt, yt, lambda);
  const MatrixXd x = with_bias(xs, bias), xta = with_bias(xt, bias);
  MatrixXd h = x.transpose() * x;
  h.diagonal().array() += lambda;
  const auto ldlt = h.ldlt();
  CigResult out;
  out.weights = ldlt.solve(x.transpose() * ys);
  const MatrixXd rt = xta * out.weights - yt;
  const double n = static_cast<double>(xt.rows());
  out.value = rt.squaredNorm() / n;
  // stationarity F = X^T (X W - Y) + lambda W = 0; dL/dX = -d<V, F>/dX with V = H^{-1} dL/dW
  const MatrixXd v = ldlt.solve((2.0 / n) * xta.transpose() * rt);
  const MatrixXd rs = x * out.weights - ys;
  const MatrixXd full = -(rs * v.transpose() + x * v * out.weights.transpose());
  out.grad = full.leftCols(xs.cols());
  return out;
}

}  // namespace dcond
