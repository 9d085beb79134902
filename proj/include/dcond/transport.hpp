#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dcond {

struct Assignment {
  std::vector<int> column_of_row;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n^3)).
Assignment solve_assignment(const Eigen::MatrixXd& cost);

struct TransportPlan {
  Eigen::MatrixXd flow;  // N x M, row sums 1/N, column sums 1/M
  double cost = 0.0;
};

/// Exact optimal transport between uniform weights on the rows and columns of
/// `cost`, solved as an integer min-cost flow (row i supplies M units, column j
/// absorbs N units) by successive shortest paths.
TransportPlan solve_uniform_transport(const Eigen::MatrixXd& cost);

/// Euclidean ground-cost matrix between the rows of a and b.
Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Exact W1 between the uniform empirical measures on the rows of t and s.
double wasserstein1(const Eigen::MatrixXd& t, const Eigen::MatrixXd& s);

}  // namespace dcond
