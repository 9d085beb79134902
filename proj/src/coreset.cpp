#include "dcond/coreset.hpp"

#include "dcond/error.hpp"
#include "dcond/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

void check_capacity(const MatrixXd& t, int m, const char* what) {
  require(t.rows() >= 1, ErrorKind::empty_dataset, std::string(what) + ": empty point set");
  require(m >= 1 && m <= t.rows(), ErrorKind::capacity,
          std::string(what) + ": need 1 <= M <= " + std::to_string(t.rows()) + ", got " +
              std::to_string(m));
}

}  // namespace

double covering_radius(const MatrixXd& t, const std::vector<std::size_t>& selected) {
  double worst = 0.0;
  for (Index i = 0; i < t.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (auto j : selected) best = std::min(best, (t.row(i) - t.row(static_cast<Index>(j))).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

CoverResult kcenter_greedy(const MatrixXd& t, int m) {
  check_capacity(t, m, "k-center");
  CoverResult r;
  std::vector<double> dist(static_cast<std::size_t>(t.rows()), std::numeric_limits<double>::infinity());
  std::size_t next = 0;
  for (int k = 0; k < m; ++k) {
    r.indices.push_back(next);
    for (Index i = 0; i < t.rows(); ++i)
      dist[i] = std::min(dist[i], (t.row(i) - t.row(static_cast<Index>(next))).norm());
    next = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  }
  r.radius = covering_radius(t, r.indices);
  return r;
}

CoverResult kcenter_exact(const MatrixXd& t, int m) {
  check_capacity(t, m, "k-center");
  const int n = static_cast<int>(t.rows());
  std::vector<std::size_t> pick(static_cast<std::size_t>(m));
  std::iota(pick.begin(), pick.end(), 0);
  CoverResult best;
  best.radius = std::numeric_limits<double>::infinity();
  best.exact = true;
  while (true) {
    const double r = covering_radius(t, pick);
    if (r < best.radius) {
      best.radius = r;
      best.indices = pick;
    }
    int i = m - 1;
    while (i >= 0 && pick[i] == static_cast<std::size_t>(n - m + i)) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < m; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

CoverResult kcenter_covering(const MatrixXd& t, int m, double exact_limit) {
  check_capacity(t, m, "k-center");
  if (binomial(static_cast<int>(t.rows()), m) <= exact_limit) return kcenter_exact(t, m);
  return kcenter_greedy(t, m);
}

namespace {

double nearest(const MatrixXd& centers, const Eigen::RowVectorXd& x, int* arg) {
  double best = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - x).squaredNorm();
    if (d < best) {
      best = d;
      if (arg) *arg = static_cast<int>(c);
    }
  }
  return best;
}

double inertia_of(const MatrixXd& t, const MatrixXd& centers) {
  double total = 0.0;
  for (Index i = 0; i < t.rows(); ++i) total += nearest(centers, t.row(i), nullptr);
  return total;
}

}  // namespace

KMeansResult kmeans_coreset(const MatrixXd& t, int k, int iters, std::uint64_t seed) {
  check_capacity(t, k, "k-means");
  require(iters >= 0, ErrorKind::config, "k-means iterations must be >= 0");
  const Index n = t.rows();
  Rng rng(seed);
  MatrixXd centers(k, t.cols());
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(n - 1))(rng);
  centers.row(0) = t.row(static_cast<Index>(first));
  used[first] = true;
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) d2[i] = (t.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (u < d2[i]) {
          pick = static_cast<std::size_t>(i);
          break;
        }
        u -= d2[i];
      }
      while (d2[pick] <= 0.0) --pick;  // rounding fell off the end
    } else {
      while (used[pick]) ++pick;  // all points coincide with chosen centers
    }
    used[pick] = true;
    centers.row(c) = t.row(static_cast<Index>(pick));
    for (Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (t.row(i) - centers.row(c)).squaredNorm());
  }

  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), 0);
  r.inertia.push_back(inertia_of(t, centers));
  for (int it = 0; it < iters; ++it) {
    for (Index i = 0; i < n; ++i) nearest(centers, t.row(i), &r.assignment[i]);
    MatrixXd sum = MatrixXd::Zero(k, t.cols());
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sum.row(r.assignment[i]) += t.row(i);
      ++count[r.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        centers.row(c) = sum.row(c) / count[c];
        continue;
      }
      Index far = 0;
      double worst = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double d = nearest(centers, t.row(i), nullptr);
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      centers.row(c) = t.row(far);
    }
    r.inertia.push_back(inertia_of(t, centers));
  }
  for (Index i = 0; i < n; ++i) nearest(centers, t.row(i), &r.assignment[i]);
  r.centers = std::move(centers);
  return r;
}

}  // namespace dcond
