#pragma once

#include "dcond/data.hpp"
#include "dcond/rng.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace testing {

inline Eigen::MatrixXd uniform_matrix(Eigen::Index r, Eigen::Index c, dcond::Rng& rng, double lo = 0.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index r, Eigen::Index c, dcond::Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline int uniform_int(dcond::Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Every class gets `per_class` rows, labels cycle 0..C-1.
inline dcond::LabeledDataset random_labeled(int per_class, int classes, int dim, dcond::Rng& rng) {
  Eigen::MatrixXd x = uniform_matrix(static_cast<Eigen::Index>(per_class) * classes, dim, rng);
  dcond::Labels y;
  for (int i = 0; i < per_class * classes; ++i) y.push_back(i % classes);
  return dcond::LabeledDataset(x, y, classes);
}

// Two isotropic 2-D Gaussians with unit sd, centres `separation` apart along f0.
inline dcond::LabeledDataset two_blobs(int n, double separation, std::uint64_t seed) {
  dcond::Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(n, 2);
  dcond::Labels y;
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    x(i, 0) = g(rng) + separation * c;
    x(i, 1) = g(rng);
    y.push_back(c);
  }
  return dcond::LabeledDataset(x, y, 2);
}

inline Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

// Central differences of a scalar function of a matrix.
inline Eigen::MatrixXd numeric_gradient(const std::function<double(const Eigen::MatrixXd&)>& f,
                                        const Eigen::MatrixXd& x, double h = 1e-5) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Eigen::MatrixXd p = x, m = x;
      p(i, j) += h;
      m(i, j) -= h;
      g(i, j) = (f(p) - f(m)) / (2 * h);
    }
  return g;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dcond_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
