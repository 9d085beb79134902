#pragma once

#include "dcond/rng.hpp"

#include <Eigen/Dense>

namespace dcond {

/// Gaussian mechanism: sensitivity * sqrt(2 ln(1.25 / delta)) / epsilon.
double dp_noise_calibration(double epsilon, double delta, double sensitivity);

/// Scales v down to norm at most c.
Eigen::VectorXd clip_to_norm(const Eigen::VectorXd& v, double c);

/// Adds N(0, sigma^2) per entry. sigma == 0 returns v untouched and draws nothing.
Eigen::VectorXd add_gaussian_noise(const Eigen::VectorXd& v, double sigma, Rng& rng);
Eigen::MatrixXd add_gaussian_noise(const Eigen::MatrixXd& v, double sigma, Rng& rng);

struct PrivacyLedger {
  double sigma = 0.0;
  double clip_norm = 0.0;
  int invocations = 0;  // mechanism applications
};

}  // namespace dcond
