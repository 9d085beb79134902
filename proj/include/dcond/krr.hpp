#pragma once

#include "dcond/data.hpp"
#include "dcond/kernels.hpp"

#include <Eigen/Dense>

namespace dcond {

Eigen::MatrixXd one_hot(const Labels& labels, int classes);

struct KrrPredictor {
  KernelSpec spec;
  Eigen::MatrixXd support;  // synthetic features
  Eigen::MatrixXd alpha;    // (K_SS + lambda I)^{-1} Y

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
};

/// Singular systems (possible only at lambda = 0) raise a linear-algebra error.
KrrPredictor krr_fit(const KernelSpec& spec, const Eigen::MatrixXd& s, const Eigen::MatrixXd& targets,
                     double lambda);
/// One-hot targets from the synthetic labels.
KrrPredictor krr_fit(const KernelSpec& spec, const SyntheticDataset& s, double lambda);

struct KrrLoss {
  double value = 0.0;       // (1/N) sum_i |f(t_i) - y_i|^2
  Eigen::MatrixXd grad_s;   // d value / d synthetic features
  Eigen::MatrixXd grad_t;   // d value / d real features (only when requested)
};

/// Closed-form loss of the ridge predictor fitted on (s, ys) and evaluated
/// on (t, yt), with gradients through the kernel entries.
KrrLoss krr_loss(const KernelSpec& spec, const Eigen::MatrixXd& s, const Eigen::MatrixXd& ys,
                 const Eigen::MatrixXd& t, const Eigen::MatrixXd& yt, double lambda, bool want_t_grad = false);

/// l_inf projected sign ascent on the real features against a fixed synthetic
/// set; returns the perturbed real features (unchanged when eps = 0).
Eigen::MatrixXd krr_adversarial_real(const KernelSpec& spec, const Eigen::MatrixXd& s,
                                     const Eigen::MatrixXd& ys, const Eigen::MatrixXd& t,
                                     const Eigen::MatrixXd& yt, double lambda, double eps, int steps);

}  // namespace dcond
