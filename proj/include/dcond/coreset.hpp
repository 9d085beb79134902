#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dcond {

struct CoverResult {
  std::vector<std::size_t> indices;  // selected rows of T, ascending for the exact solver
  double radius = 0.0;               // d_H(T, S) with S a subset of T
  bool exact = false;
};

/// max over rows of t of the distance to the nearest selected row.
double covering_radius(const Eigen::MatrixXd& t, const std::vector<std::size_t>& selected);

/// Farthest-point traversal starting at row 0.
CoverResult kcenter_greedy(const Eigen::MatrixXd& t, int m);
/// Exhaustive search over all m-subsets (lexicographically first optimum).
CoverResult kcenter_exact(const Eigen::MatrixXd& t, int m);
/// Exact when C(|T|, m) <= exact_limit, greedy otherwise.
CoverResult kcenter_covering(const Eigen::MatrixXd& t, int m, double exact_limit = 1e5);

/// C(n, k) as a double (saturates to infinity).
double binomial(int n, int k);

struct KMeansResult {
  Eigen::MatrixXd centers;
  std::vector<int> assignment;
  std::vector<double> inertia;  // after seeding, then after every Lloyd iteration
};

/// k-means++ seeding followed by Lloyd iterations; an empty cluster is
/// re-seeded at the point farthest from its current center.
KMeansResult kmeans_coreset(const Eigen::MatrixXd& t, int k, int iters, std::uint64_t seed);

}  // namespace dcond
