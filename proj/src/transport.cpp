#include "dcond/transport.hpp"

#include "dcond/error.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;

Assignment solve_assignment(const MatrixXd& cost) {
  require(cost.rows() == cost.cols(), ErrorKind::shape, "assignment needs a square cost matrix");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; p[j] = row matched to column j, column 0 is a sentinel
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment a;
  a.column_of_row.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) a.column_of_row[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  for (int i = 0; i < n; ++i) a.cost += cost(i, a.column_of_row[static_cast<std::size_t>(i)]);
  return a;
}

TransportPlan solve_uniform_transport(const MatrixXd& cost) {
  const Index n = cost.rows(), m = cost.cols();
  require(n >= 1 && m >= 1, ErrorKind::domain, "transport needs two nonempty sets");
  // nodes: 0 source, 1..n rows, n+1..n+m columns, n+m+1 sink
  const Index source = 0, sink = n + m + 1, nodes = n + m + 2;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<long long> supply(static_cast<std::size_t>(n), m), demand(static_cast<std::size_t>(m), n);
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> flow =
      Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, m);
  std::vector<double> pot(static_cast<std::size_t>(nodes), 0.0), dist(static_cast<std::size_t>(nodes));
  std::vector<Index> prev(static_cast<std::size_t>(nodes));
  std::vector<char> done(static_cast<std::size_t>(nodes));
  long long remaining = static_cast<long long>(n) * m;


  while (remaining > 0) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[static_cast<std::size_t>(source)] = 0.0;
    using Item = std::pair<double, Index>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    heap.emplace(0.0, source);
    auto relax = [&](Index from, Index to, double c) {
      if (done[static_cast<std::size_t>(to)]) return;  // settled; round-off must not rewire the tree
      const double nd = dist[static_cast<std::size_t>(from)] + c + pot[static_cast<std::size_t>(from)] -
                        pot[static_cast<std::size_t>(to)];
      if (nd < dist[static_cast<std::size_t>(to)]) {
        dist[static_cast<std::size_t>(to)] = nd;
        prev[static_cast<std::size_t>(to)] = from;
        heap.emplace(nd, to);
      }
    };
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (done[static_cast<std::size_t>(u)] || d > dist[static_cast<std::size_t>(u)]) continue;
      done[static_cast<std::size_t>(u)] = 1;
      if (u == source) {
        for (Index i = 0; i < n; ++i)
          if (supply[static_cast<std::size_t>(i)] > 0) relax(source, 1 + i, 0.0);
      } else if (u <= n) {
        const Index i = u - 1;
        for (Index j = 0; j < m; ++j) relax(u, n + 1 + j, cost(i, j));
      } else if (u < sink) {
        const Index j = u - n - 1;
        for (Index i = 0; i < n; ++i)
          if (flow(i, j) > 0) relax(u, 1 + i, -cost(i, j));
        if (demand[static_cast<std::size_t>(j)] > 0) relax(u, sink, 0.0);
      }
    }
    require(dist[static_cast<std::size_t>(sink)] < inf, ErrorKind::numerical,
            "transport flow could not be completed");
    // Capping at the sink distance keeps reduced costs nonnegative for nodes the search never reached.
    const double cap = dist[static_cast<std::size_t>(sink)];
    for (Index k = 0; k < nodes; ++k) pot[static_cast<std::size_t>(k)] += std::min(dist[static_cast<std::size_t>(k)], cap);

    // bottleneck along the path sink <- ... <- source
    long long push = remaining;
    for (Index v = sink; v != source; v = prev[static_cast<std::size_t>(v)]) {
      const Index u = prev[static_cast<std::size_t>(v)];
      if (u == source) push = std::min(push, supply[static_cast<std::size_t>(v - 1)]);
      else if (v == sink) push = std::min(push, demand[static_cast<std::size_t>(u - n - 1)]);
      else if (u > n) push = std::min(push, flow(v - 1, u - n - 1));
    }
    for (Index v = sink; v != source; v = prev[static_cast<std::size_t>(v)]) {
      const Index u = prev[static_cast<std::size_t>(v)];
      if (u == source) supply[static_cast<std::size_t>(v - 1)] -= push;
      else if (v == sink) demand[static_cast<std::size_t>(u - n - 1)] -= push;
      else if (u <= n) flow(u - 1, v - n - 1) += push;
      else flow(v - 1, u - n - 1) -= push;
    }
    remaining -= push;
  }

  TransportPlan plan;
  const double total = static_cast<double>(n) * static_cast<double>(m);
  plan.flow = flow.cast<double>() / total;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      if (flow(i, j) > 0) plan.cost += static_cast<double>(flow(i, j)) * cost(i, j);
  plan.cost /= total;
  return plan;
}

MatrixXd pairwise_distances(const MatrixXd& a, const MatrixXd& b) {
  require(a.cols() == b.cols(), ErrorKind::shape, "point sets differ in dimension");
  MatrixXd d(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  return d;
}

double wasserstein1(const MatrixXd& t, const MatrixXd& s) {
  require(t.rows() >= 1 && s.rows() >= 1, ErrorKind::domain, "W1 needs two nonempty sets");
  MatrixXd c = pairwise_distances(t, s);
  if (t.rows() == 1 || s.rows() == 1) return c.mean();  // the only coupling
  if (t.rows() == s.rows()) return solve_assignment(c).cost / static_cast<double>(t.rows());
  return solve_uniform_transport(c).cost;
}

}  // namespace dcond
