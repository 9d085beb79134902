#include "dcond/privacy.hpp"

#include "dcond/error.hpp"

#include <cmath>

namespace dcond {

double dp_noise_calibration(double epsilon, double delta, double sensitivity) {
  require(std::isfinite(epsilon) && epsilon > 0.0, ErrorKind::domain, "epsilon must be > 0");
  require(delta > 0.0 && delta < 1.0, ErrorKind::domain, "delta must lie in (0, 1)");
  require(std::isfinite(sensitivity) && sensitivity > 0.0, ErrorKind::domain,
          "sensitivity must be > 0");
  return sensitivity * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

Eigen::VectorXd clip_to_norm(const Eigen::VectorXd& v, double c) {
  require(c > 0.0, ErrorKind::config, "clip norm must be > 0");
  const double n = v.norm();
  return n > c ? Eigen::VectorXd(v * (c / n)) : v;
}

Eigen::VectorXd add_gaussian_noise(const Eigen::VectorXd& v, double sigma, Rng& rng) {
  require(sigma >= 0.0, ErrorKind::config, "noise scale must be >= 0");
  if (sigma == 0.0) return v;
  std::normal_distribution<double> noise(0.0, sigma);
  Eigen::VectorXd out = v;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += noise(rng);
  return out;
}

Eigen::MatrixXd add_gaussian_noise(const Eigen::MatrixXd& v, double sigma, Rng& rng) {
  require(sigma >= 0.0, ErrorKind::config, "noise scale must be >= 0");
  if (sigma == 0.0) return v;
  std::normal_distribution<double> noise(0.0, sigma);
  Eigen::MatrixXd out = v;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) += noise(rng);
  return out;
}

}  // namespace dcond
