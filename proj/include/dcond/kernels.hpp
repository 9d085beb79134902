#pragma once

#include "dcond/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dcond {

enum class KernelFamily { gamma_exponential, empirical_ntk, random_feature, nfk, pullback };

std::string to_string(KernelFamily f);
KernelFamily parse_kernel_family(const std::string& s);

using Encoder = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct KernelSpec {
  KernelFamily family = KernelFamily::gamma_exponential;
  double gamma = 2.0;   // exponent, gamma_exponential only
  double scale = 1.0;   // c in exp(-c |x1 - x2|^gamma); random features target exp(-c |d|^2)
  int feature_dim = 256;
  std::uint64_t seed = 0;
  std::vector<Mlp> models;  // empirical_ntk / nfk: averaged over the ensemble
  Encoder encoder;          // pullback
  std::shared_ptr<const KernelSpec> base;

  static KernelSpec gaussian(double c);
  static KernelSpec gamma_exponential(double c, double gamma);
  static KernelSpec random_features(double c, int p, std::uint64_t seed);
  static KernelSpec ntk(std::vector<Mlp> models);
  static KernelSpec nfk(std::vector<Mlp> models);
  static KernelSpec pullback(KernelSpec base, Encoder encoder);
};

void validate(const KernelSpec& spec);

double kernel_eval(const KernelSpec& spec, const Eigen::VectorXd& x1, const Eigen::VectorXd& x2);
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& a,
                            const Eigen::MatrixXd& b);

/// Random Fourier features sqrt(2/p) cos(W x + b) with W ~ N(0, 2c I) and
/// b ~ U[0, 2 pi), so phi(x1)^T phi(x2) approximates exp(-c |x1 - x2|^2).
/// The frequencies are drawn once per (seed, p, n, c) and cached.
Eigen::VectorXd random_feature_map(const KernelSpec& spec, const Eigen::VectorXd& x,
                                   std::uint64_t seed);
/// Row-wise feature map using spec.seed.
Eigen::MatrixXd random_feature_map(const KernelSpec& spec, const Eigen::MatrixXd& x);

/// Row i holds grad_x <phi(x), v_i> at x = x_i (spec.seed frequencies).
Eigen::MatrixXd random_feature_vjp(const KernelSpec& spec, const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& v);

/// Biased V-statistic: mean K(T,T) - 2 mean K(T,S) + mean K(S,S).
double mmd_squared(const KernelSpec& spec, const Eigen::MatrixXd& t, const Eigen::MatrixXd& s);

/// Gradient of x -> k(x, y_j) for every row y_j of `ys`; row j holds the result.
/// Analytic for gamma_exponential and random_feature, central differences otherwise.
Eigen::MatrixXd kernel_grad_first(const KernelSpec& spec, const Eigen::VectorXd& x,
                                  const Eigen::MatrixXd& ys);

/// c = 1 / (2 median^2) over distinct-pair distances of the rows of t
/// (falls back to c = 1 when the median distance is zero).
double median_heuristic_scale(const Eigen::MatrixXd& t);

}  // namespace dcond
