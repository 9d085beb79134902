#include "dcond/krr.hpp"

#include "dcond/error.hpp"

#include <cmath>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd one_hot(const Labels& labels, int classes) {
  MatrixXd y = MatrixXd::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < classes, ErrorKind::label, "label out of range");
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

MatrixXd KrrPredictor::predict(const MatrixXd& x) const { return gram_matrix(spec, x, support) * alpha; }

namespace {

Eigen::FullPivLU<MatrixXd> factor(const KernelSpec& spec, const MatrixXd& s, double lambda) {
  require(lambda >= 0.0 && std::isfinite(lambda), ErrorKind::domain, "ridge must be >= 0");
  MatrixXd a = gram_matrix(spec, s, s);
  a.diagonal().array() += lambda;
  Eigen::FullPivLU<MatrixXd> lu(a);
  require(lu.isInvertible(), ErrorKind::linear_algebra,
          "kernel system K_SS + lambda I is singular (lambda = " + std::to_string(lambda) + ")");
  return lu;
}

}  // namespace

KrrPredictor krr_fit(const KernelSpec& spec, const MatrixXd& s, const MatrixXd& targets, double lambda) {
  require(s.rows() >= 1, ErrorKind::empty_dataset, "ridge fit needs at least one support point");
  require(targets.rows() == s.rows(), ErrorKind::shape, "one target row per support point");
  auto lu = factor(spec, s, lambda);
  MatrixXd alpha = lu.solve(targets);
  require(alpha.allFinite(), ErrorKind::linear_algebra, "non-finite ridge coefficients");
  return {spec, s, alpha};
}

KrrPredictor krr_fit(const KernelSpec& spec, const SyntheticDataset& s, double lambda) {
  return krr_fit(spec, s.features(), one_hot(s.labels(), s.class_count()), lambda);
}

KrrLoss krr_loss(const KernelSpec& spec, const MatrixXd& s, const MatrixXd& ys, const MatrixXd& t,
                 const MatrixXd& yt, double lambda, bool want_t_grad) {
  require(t.rows() == yt.rows() && s.rows() == ys.rows() && ys.cols() == yt.cols(), ErrorKind::shape,
          "ridge loss shape mismatch");
  auto lu = factor(spec, s, lambda);
  const MatrixXd alpha = lu.solve(ys);
  const MatrixXd kts = gram_matrix(spec, t, s);
  const MatrixXd r = kts * alpha - yt;
  const double n = static_cast<double>(t.rows());
  KrrLoss out;
  out.value = r.squaredNorm() / n;

  const MatrixXd d_kts = (2.0 / n) * r * alpha.transpose();             // N x M
  const MatrixXd g = kts.transpose() * ((2.0 / n) * r);                 // dL/dalpha
  const MatrixXd d_a = -lu.solve(g) * alpha.transpose();                // dL/dK_SS
  out.grad_s = MatrixXd::Zero(s.rows(), s.cols());
  for (Index j = 0; j < s.rows(); ++j) {
    const VectorXd sj = s.row(j).transpose();
    out.grad_s.row(j) = d_kts.col(j).transpose() * kernel_grad_first(spec, sj, t);
    const VectorXd w = d_a.row(j).transpose() + d_a.col(j);
    out.grad_s.row(j) += w.transpose() * kernel_grad_first(spec, sj, s);
  }
  if (want_t_grad) {
    out.grad_t = MatrixXd::Zero(t.rows(), t.cols());
    for (Index i = 0; i < t.rows(); ++i)
      out.grad_t.row(i) = d_kts.row(i) * kernel_grad_first(spec, t.row(i).transpose(), s);
  }
  return out;
}

MatrixXd krr_adversarial_real(const KernelSpec& spec, const MatrixXd& s, const MatrixXd& ys,
                              const MatrixXd& t, const MatrixXd& yt, double lambda, double eps, int steps) {
  require(eps >= 0.0 && steps >= 1, ErrorKind::config, "adversarial radius must be >= 0 with >= 1 step");
  if (eps == 0.0) return t;
  const double step = 2.5 * eps / steps;
  MatrixXd x = t;
  for (int k = 0; k < steps; ++k) {
    const MatrixXd g = krr_loss(spec, s, ys, x, yt, lambda, true).grad_t;
    x += step * g.array().sign().matrix();
    x = x.array().max(t.array() - eps).min(t.array() + eps).matrix();
    x = x.cwiseMax(0.0).cwiseMin(1.0);
  }
  return x;
}

}  // namespace dcond
