#include "dcond/kernels.hpp"

#include "dcond/error.hpp"
#include "dcond/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::gamma_exponential: return "gamma_exponential";
    case KernelFamily::empirical_ntk: return "empirical_ntk";
    case KernelFamily::random_feature: return "random_feature";
    case KernelFamily::nfk: return "nfk";
    case KernelFamily::pullback: return "pullback";
  }
  return "?";
}

KernelFamily parse_kernel_family(const std::string& s) {
  for (auto f : {KernelFamily::gamma_exponential, KernelFamily::empirical_ntk,
                 KernelFamily::random_feature, KernelFamily::nfk, KernelFamily::pullback})
    if (to_string(f) == s) return f;
  if (s == "gaussian") return KernelFamily::gamma_exponential;
  if (s == "ntk") return KernelFamily::empirical_ntk;
  fail(ErrorKind::config, "unknown kernel family '" + s + "'");
}

KernelSpec KernelSpec::gaussian(double c) { return gamma_exponential(c, 2.0); }

KernelSpec KernelSpec::gamma_exponential(double c, double gamma) {
  KernelSpec k;
  k.family = KernelFamily::gamma_exponential;
  k.scale = c;
  k.gamma = gamma;
  return k;
}

KernelSpec KernelSpec::random_features(double c, int p, std::uint64_t seed) {
  KernelSpec k;
  k.family = KernelFamily::random_feature;
  k.scale = c;
  k.feature_dim = p;
  k.seed = seed;
  return k;
}

KernelSpec KernelSpec::ntk(std::vector<Mlp> models) {
  KernelSpec k;
  k.family = KernelFamily::empirical_ntk;
  k.models = std::move(models);
  return k;
}

KernelSpec KernelSpec::nfk(std::vector<Mlp> models) {
  KernelSpec k;
  k.family = KernelFamily::nfk;
  k.models = std::move(models);
  return k;
}

KernelSpec KernelSpec::pullback(KernelSpec base, Encoder encoder) {
  KernelSpec k;
  k.family = KernelFamily::pullback;
  k.base = std::make_shared<const KernelSpec>(std::move(base));
  k.encoder = std::move(encoder);
  return k;
}

void validate(const KernelSpec& spec) {
  switch (spec.family) {
    case KernelFamily::gamma_exponential:
      require(spec.gamma > 0.0 && spec.gamma <= 2.0, ErrorKind::config,
              "gamma must lie in (0, 2]");
      require(spec.scale > 0.0, ErrorKind::config, "kernel scale must be positive");
      break;
    case KernelFamily::random_feature:
      require(spec.scale > 0.0, ErrorKind::config, "kernel scale must be positive");
      require(spec.feature_dim >= 1, ErrorKind::config, "feature dimension must be >= 1");
      break;
    case KernelFamily::empirical_ntk:
    case KernelFamily::nfk:
      require(!spec.models.empty(), ErrorKind::config, "model-based kernel needs a model");
      for (const auto& m : spec.models)
        require(m.input_dim() == spec.models.front().input_dim(), ErrorKind::shape,
                "kernel ensemble members differ in input dimension");
      break;
    case KernelFamily::pullback:
      require(spec.base != nullptr && static_cast<bool>(spec.encoder), ErrorKind::config,
              "pullback kernel needs a base kernel and an encoder");
      validate(*spec.base);
      break;
  }
}

namespace {

struct FourierFrequencies {
  MatrixXd w;  // p x n
  VectorXd b;  // p
};

std::shared_ptr<const FourierFrequencies> fourier_frequencies(std::uint64_t seed, int p, Index n,
                                                              double c) {
  using Key = std::tuple<std::uint64_t, int, Index, double>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const FourierFrequencies>> cache;
  const Key key{seed, p, n, c};
  std::lock_guard<std::mutex> lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto f = std::make_shared<FourierFrequencies>();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 * c));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  f->w.resize(p, n);
  f->b.resize(p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < n; ++j) f->w(i, j) = normal(rng);
    f->b(i) = phase(rng);
  }
  cache.emplace(key, f);
  return f;
}

double gamma_exp(double c, double gamma, double dist_sq) {
  if (gamma == 2.0) return std::exp(-c * dist_sq);
  return std::exp(-c * std::pow(std::sqrt(dist_sq), gamma));
}

void check_dims(Index a, Index b) {
  require(a == b, ErrorKind::shape,
          "kernel arguments differ in dimension (" + std::to_string(a) + " vs " +
              std::to_string(b) + ")");
}

MatrixXd encode_rows(const Encoder& enc, const MatrixXd& x) {
  if (x.rows() == 0) return x;
  VectorXd first = enc(x.row(0).transpose());
  MatrixXd out(x.rows(), first.size());
  out.row(0) = first.transpose();
  for (Index i = 1; i < x.rows(); ++i) out.row(i) = enc(x.row(i).transpose()).transpose();
  return out;
}

// Parameter Jacobians of each ensemble member at each row, stacked C x P.
std::vector<std::vector<MatrixXd>> ntk_jacobians(const KernelSpec& spec, const MatrixXd& x) {
  std::vector<std::vector<MatrixXd>> out(spec.models.size());
  for (std::size_t m = 0; m < spec.models.size(); ++m)
    for (Index i = 0; i < x.rows(); ++i)
      out[m].push_back(spec.models[m].param_jacobian(x.row(i).transpose()));
  return out;
}

}  // namespace

VectorXd random_feature_map(const KernelSpec& spec, const VectorXd& x, std::uint64_t seed) {
  require(spec.feature_dim >= 1, ErrorKind::config, "feature dimension must be >= 1");
  auto f = fourier_frequencies(seed, spec.feature_dim, x.size(), spec.scale);
  const double amp = std::sqrt(2.0 / spec.feature_dim);
  return amp * (f->w * x + f->b).array().cos().matrix();
}

MatrixXd random_feature_map(const KernelSpec& spec, const MatrixXd& x) {
  require(spec.feature_dim >= 1, ErrorKind::config, "feature dimension must be >= 1");
  auto f = fourier_frequencies(spec.seed, spec.feature_dim, x.cols(), spec.scale);
  const double amp = std::sqrt(2.0 / spec.feature_dim);
  MatrixXd proj = x * f->w.transpose();
  proj.rowwise() += f->b.transpose();
  return amp * proj.array().cos().matrix();
}

MatrixXd random_feature_vjp(const KernelSpec& spec, const MatrixXd& x, const MatrixXd& v) {
  require(v.rows() == x.rows() && v.cols() == spec.feature_dim, ErrorKind::shape,
          "feature seed shape mismatch");
  auto f = fourier_frequencies(spec.seed, spec.feature_dim, x.cols(), spec.scale);
  const double amp = std::sqrt(2.0 / spec.feature_dim);
  MatrixXd proj = x * f->w.transpose();
  proj.rowwise() += f->b.transpose();
  MatrixXd weighted = proj.array().sin().matrix().cwiseProduct(v);
  return -amp * weighted * f->w;
}

double kernel_eval(const KernelSpec& spec, const VectorXd& x1, const VectorXd& x2) {
  check_dims(x1.size(), x2.size());
  switch (spec.family) {
    case KernelFamily::gamma_exponential:
      return gamma_exp(spec.scale, spec.gamma, (x1 - x2).squaredNorm());
    case KernelFamily::random_feature:
      return random_feature_map(spec, x1, spec.seed).dot(random_feature_map(spec, x2, spec.seed));
    case KernelFamily::pullback:
      return kernel_eval(*spec.base, spec.encoder(x1), spec.encoder(x2));
    case KernelFamily::empirical_ntk:
    case KernelFamily::nfk: {
      MatrixXd a = x1.transpose();
      MatrixXd b = x2.transpose();
      return gram_matrix(spec, a, b)(0, 0);
    }
  }
  return 0.0;
}

MatrixXd gram_matrix(const KernelSpec& spec, const MatrixXd& a, const MatrixXd& b) {
  validate(spec);
  check_dims(a.cols(), b.cols());
  switch (spec.family) {
    case KernelFamily::gamma_exponential: {
      MatrixXd k(a.rows(), b.rows());
      for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < b.rows(); ++j)
          k(i, j) = gamma_exp(spec.scale, spec.gamma, (a.row(i) - b.row(j)).squaredNorm());
      return k;
    }
    case KernelFamily::random_feature:
      return random_feature_map(spec, a) * random_feature_map(spec, b).transpose();
    case KernelFamily::pullback:
      return gram_matrix(*spec.base, encode_rows(spec.encoder, a), encode_rows(spec.encoder, b));
    case KernelFamily::nfk: {
      require(a.cols() == spec.models.front().input_dim(), ErrorKind::shape,
              "input dimension does not match the kernel model");
      MatrixXd k = MatrixXd::Zero(a.rows(), b.rows());
      for (const auto& m : spec.models) k += m.embedding(a) * m.embedding(b).transpose();
      return k / static_cast<double>(spec.models.size());
    }
    case KernelFamily::empirical_ntk: {
      require(a.cols() == spec.models.front().input_dim(), ErrorKind::shape,
              "input dimension does not match the kernel model");
      auto ja = ntk_jacobians(spec, a);
      auto jb = ntk_jacobians(spec, b);
      MatrixXd k = MatrixXd::Zero(a.rows(), b.rows());
      for (std::size_t m = 0; m < spec.models.size(); ++m)
        for (Index i = 0; i < a.rows(); ++i)
          for (Index j = 0; j < b.rows(); ++j)
            k(i, j) += (ja[m][static_cast<std::size_t>(i)].array() *
                        jb[m][static_cast<std::size_t>(j)].array())
                           .sum();
      return k / static_cast<double>(spec.models.size());
    }
  }
  return MatrixXd();
}

double mmd_squared(const KernelSpec& spec, const MatrixXd& t, const MatrixXd& s) {
  require(t.rows() >= 1 && s.rows() >= 1, ErrorKind::domain, "MMD needs two nonempty sets");
  return gram_matrix(spec, t, t).mean() - 2.0 * gram_matrix(spec, t, s).mean() +
         gram_matrix(spec, s, s).mean();
}

MatrixXd kernel_grad_first(const KernelSpec& spec, const VectorXd& x, const MatrixXd& ys) {
  check_dims(x.size(), ys.cols());
  MatrixXd g(ys.rows(), x.size());
  if (spec.family == KernelFamily::gamma_exponential) {
    for (Index j = 0; j < ys.rows(); ++j) {
      VectorXd d = x - ys.row(j).transpose();
      const double r2 = d.squaredNorm();
      if (r2 == 0.0) {
        g.row(j).setZero();
        continue;
      }
      const double k = gamma_exp(spec.scale, spec.gamma, r2);
      // d/dx exp(-c r^g) = -c g r^(g-2) d k
      const double coef = -spec.scale * spec.gamma * std::pow(r2, 0.5 * spec.gamma - 1.0) * k;
      g.row(j) = coef * d.transpose();
    }
    return g;
  }
  if (spec.family == KernelFamily::random_feature) {
    auto f = fourier_frequencies(spec.seed, spec.feature_dim, x.size(), spec.scale);
    const double amp = std::sqrt(2.0 / spec.feature_dim);
    VectorXd sin_x = (f->w * x + f->b).array().sin().matrix();
    MatrixXd phi_y = random_feature_map(spec, ys);  // rows x p
    for (Index j = 0; j < ys.rows(); ++j)
      g.row(j) = (-amp * f->w.transpose() * sin_x.cwiseProduct(phi_y.row(j).transpose())).transpose();
    return g;
  }
  const double h = 1e-5;
  for (Index c = 0; c < x.size(); ++c) {
    VectorXd xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    g.col(c) = (gram_matrix(spec, xp.transpose(), ys) - gram_matrix(spec, xm.transpose(), ys))
                   .row(0)
                   .transpose() /
               (2.0 * h);
  }
  return g;
}

double median_heuristic_scale(const MatrixXd& t) {
  std::vector<double> d;
  for (Index i = 0; i < t.rows(); ++i)
    for (Index j = i + 1; j < t.rows(); ++j) d.push_back((t.row(i) - t.row(j)).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? 1.0 / (2.0 * med * med) : 1.0;
}

}  // namespace dcond
