#pragma once

#include "dcond/data.hpp"
#include "dcond/method_config.hpp"
#include "dcond/mlp.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace dcond {

/// Central differences of f at every entry of x.
Eigen::MatrixXd central_difference(const std::function<double(const Eigen::MatrixXd&)>& f,
                                   const Eigen::MatrixXd& x, double step);

/// `steps` full-batch gradient steps of size lr on (x, y). The first
/// `frozen_steps` use `frozen_x` instead of x.
Mlp unroll(const Mlp& m, const Eigen::MatrixXd& x, const Labels& y, Loss loss, int steps, double lr,
           const Eigen::MatrixXd* frozen_x = nullptr, int frozen_steps = 0);

struct BpttOptions {
  int inner_steps = 5;  // steps whose inputs are differentiated
  Loss loss = Loss::cross_entropy;
  std::optional<RobustOuter> robust;  // adversarial outer loss
  std::optional<double> curvature;    // weight on lambda_max of the outer loss at theta_K
  int power_iters = 10;
  std::uint64_t power_seed = 0;
  double fd_step = 1e-5;
};

struct BpttResult {
  double value = 0.0;
  Eigen::MatrixXd grad_s;
  double grad_eta = 0.0;
};

/// Outer loss L(theta_K(S, eta), T) after unrolled inner training from theta0,
/// with finite-difference gradients w.r.t. S and eta. `prefix` unperturbed
/// steps run first (randomized truncation). With robust set, the real points
/// are attacked once at the unperturbed theta_K and held fixed.
class BpttObjective {
 public:
  BpttObjective(Mlp theta0, LabeledDataset t, Labels s_labels, BpttOptions options);

  double value(const Eigen::MatrixXd& s, double eta, int prefix = 0) const;
  BpttResult evaluate(const Eigen::MatrixXd& s, double eta, int prefix = 0) const;

 private:
  double outer(const Eigen::MatrixXd& s, double eta, int prefix, const Eigen::MatrixXd& s_base,
               const Eigen::MatrixXd& t_eval) const;
  Eigen::MatrixXd attacked_real(const Eigen::MatrixXd& s, double eta, int prefix) const;

  Mlp theta0_;
  LabeledDataset t_;
  Labels s_labels_;
  BpttOptions options_;
};

/// Sum over epochs of |theta_t(S) - theta_t(T)|_2 between a student trained
/// on S and an expert trained on T from the same initialization.
class TrajectoryObjective {
 public:
  TrajectoryObjective(Mlp theta0, const LabeledDataset& t, TrainConfig cfg);

  const Trajectory& expert() const { return expert_; }
  Trajectory student(const Eigen::MatrixXd& s, const Labels& labels) const;
  double value(const Eigen::MatrixXd& s, const Labels& labels) const;
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& s, const Labels& labels, double step) const;

 private:
  Mlp theta0_;
  TrainConfig cfg_;
  Trajectory expert_;
};

struct CigResult {
  double value = 0.0;       // (1/N) |X_T W - Y_T|^2
  Eigen::MatrixXd grad;     // implicit gradient w.r.t. the synthetic features
  Eigen::MatrixXd weights;  // inner optimum W (n [+1] x C)
};

/// Inner problem: W = argmin 1/2 |X W - Y|^2 + lambda/2 |W|^2, X the synthetic
/// features (with a constant column when `bias`). Outer gradient from the
/// implicit function theorem with the explicit Hessian X^T X + lambda I.
CigResult cig_ridge(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys, const Eigen::MatrixXd& xt,
                    const Eigen::MatrixXd& yt, double lambda, bool bias = true);
/// Outer loss only; used by finite-difference checks.
double cig_ridge_outer(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& ys, const Eigen::MatrixXd& xt,
                       const Eigen::MatrixXd& yt, double lambda, bool bias = true);

}  // namespace dcond
