#include "dcond/spaces.hpp"

#include "dcond/error.hpp"
#include "dcond/transport.hpp"
#include "dcond/util.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

LinearAutoencoder::LinearAutoencoder(VectorXd mean, MatrixXd basis)
    : mean_(std::move(mean)), basis_(std::move(basis)) {
  require(basis_.cols() >= 1 && basis_.cols() <= basis_.rows(), ErrorKind::config,
          "latent dimension must lie in [1, n]");
  require(mean_.size() == basis_.rows(), ErrorKind::shape, "mean and basis disagree on n");
  const double off = (basis_.transpose() * basis_ - MatrixXd::Identity(basis_.cols(), basis_.cols()))
                         .cwiseAbs()
                         .maxCoeff();
  require(off <= 1e-10, ErrorKind::validation, "autoencoder basis is not orthonormal");
}

LinearAutoencoder LinearAutoencoder::identity(Index n) {
  return LinearAutoencoder(VectorXd::Zero(n), MatrixXd::Identity(n, n));
}

MatrixXd LinearAutoencoder::encode(const MatrixXd& x) const {
  require(x.cols() == input_dim(), ErrorKind::shape, "encoder input dimension mismatch");
  return (x.rowwise() - mean_.transpose()) * basis_;
}

MatrixXd LinearAutoencoder::decode(const MatrixXd& z) const {
  require(z.cols() == latent_dim(), ErrorKind::shape, "decoder input dimension mismatch");
  MatrixXd x = z * basis_.transpose();
  x.rowwise() += mean_.transpose();
  return x;
}

VectorXd LinearAutoencoder::encode_point(const VectorXd& x) const {
  require(x.size() == input_dim(), ErrorKind::shape, "encoder input dimension mismatch");
  return basis_.transpose() * (x - mean_);
}

Encoder LinearAutoencoder::encoder() const {
  LinearAutoencoder copy = *this;
  return [copy](const VectorXd& x) { return copy.encode_point(x); };
}

std::string LinearAutoencoder::to_json() const {
  nlohmann::ordered_json j;
  j["input_dim"] = input_dim();
  j["latent_dim"] = latent_dim();
  j["mean"] = to_std_vector(mean_);
  j["basis_column_major"] = std::vector<double>(basis_.data(), basis_.data() + basis_.size());
  return j.dump(2) + "\n";
}

LinearAutoencoder LinearAutoencoder::from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    const Index n = j.at("input_dim").get<Index>(), m = j.at("latent_dim").get<Index>();
    auto flat = j.at("basis_column_major").get<std::vector<double>>();
    require(static_cast<Index>(flat.size()) == n * m, ErrorKind::shape, "basis has the wrong size");
    return LinearAutoencoder(to_eigen(j.at("mean").get<std::vector<double>>()),
                             Eigen::Map<const MatrixXd>(flat.data(), n, m));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("autoencoder: ") + e.what());
  }
}

LinearAutoencoder fit_linear_autoencoder(const LabeledDataset& t, int m) {
  const Index n = t.dim();
  require(m >= 1 && m < n, ErrorKind::config,
          "latent dimension " + std::to_string(m) + " must lie in [1, " + std::to_string(n) + ")");
  require(t.size() >= 2, ErrorKind::empty_dataset, "PCA needs at least two samples");
  VectorXd mean = t.features().colwise().mean().transpose();
  MatrixXd centered = t.features().rowwise() - mean.transpose();
  MatrixXd cov = centered.transpose() * centered / static_cast<double>(t.size());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, ErrorKind::linear_algebra, "covariance eigensolver failed");
  MatrixXd basis(n, m);
  for (int k = 0; k < m; ++k) {
    VectorXd v = eig.eigenvectors().col(n - 1 - k);  // eigenvalues ascend
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(k) = v;
  }
  return LinearAutoencoder(std::move(mean), std::move(basis));
}

MatrixXd push_forward_dataset(const LinearAutoencoder& ae, const MatrixXd& points, PushDirection d) {
  return d == PushDirection::encode ? ae.encode(points) : ae.decode(points);
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::input_input: return "input_input";
    case Regime::input_latent: return "input_latent";
    case Regime::latent_input: return "latent_input";
    case Regime::latent_latent: return "latent_latent";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  for (auto r : {Regime::input_input, Regime::input_latent, Regime::latent_input, Regime::latent_latent})
    if (to_string(r) == s) return r;
  fail(ErrorKind::config, "unknown regime '" + s + "'");
}

bool optimizes_latent(Regime r) { return r == Regime::input_latent || r == Regime::latent_latent; }
bool matches_latent(Regime r) { return r == Regime::latent_input || r == Regime::latent_latent; }

MatrixXd AffineMap::apply(const MatrixXd& x) const {
  MatrixXd y = x * a.transpose();
  y.rowwise() += b.transpose();
  return y;
}

MatrixXd RegimeSetup::initial_variables(const MatrixXd& s0) const {
  if (!optimizes_latent(regime)) return s0;
  // latent variables: least-squares inverse of the decoder, i.e. the encoder
  const MatrixXd& w = to_input.a;  // n x m basis
  return (s0.rowwise() - to_input.b.transpose()) * w;
}

RegimeSetup make_regime(Regime regime, const LinearAutoencoder& ae, const MatrixXd& t) {
  const Index n = ae.input_dim(), m = ae.latent_dim();
  require(t.cols() == n, ErrorKind::shape, "dataset dimension does not match the autoencoder");
  AffineMap identity_n{MatrixXd::Identity(n, n), VectorXd::Zero(n)};
  AffineMap identity_m{MatrixXd::Identity(m, m), VectorXd::Zero(m)};
  AffineMap decode{ae.basis(), ae.mean()};
  AffineMap encode{ae.basis().transpose(), -ae.basis().transpose() * ae.mean()};
  RegimeSetup s{regime, matches_latent(regime) ? ae.encode(t) : t, identity_n, identity_n,
                !optimizes_latent(regime)};
  switch (regime) {
    case Regime::input_input: break;
    case Regime::input_latent: s.to_match = decode; s.to_input = decode; break;
    case Regime::latent_input: s.to_match = encode; break;
    case Regime::latent_latent: s.to_match = identity_m; s.to_input = decode; break;
  }
  return s;
}

double regime_objective(Regime regime, const LinearAutoencoder& ae, const LabeledDataset& t,
                        const MatrixXd& variables, const Labels& labels, RegimeDiscrepancy disc,
                        const RegimeOptions& o) {
  const Index want = optimizes_latent(regime) ? ae.latent_dim() : ae.input_dim();
  require(variables.cols() == want, ErrorKind::config,
          "regime " + to_string(regime) + " expects variables of dimension " + std::to_string(want));
  MatrixXd tm, sm;
  switch (regime) {
    case Regime::input_input: tm = t.features(); sm = variables; break;
    case Regime::input_latent: tm = t.features(); sm = ae.decode(variables); break;
    case Regime::latent_input: tm = ae.encode(t.features()); sm = ae.encode(variables); break;
    case Regime::latent_latent: tm = ae.encode(t.features()); sm = variables; break;
  }
  LabeledDataset tt(tm, t.labels(), t.class_count());
  LabeledDataset ss(sm, labels, t.class_count());
  switch (disc) {
    case RegimeDiscrepancy::mmd: {
      double total = 0.0;
      for (int y = 0; y < t.class_count(); ++y) total += mmd_squared(o.kernel, tt.class_rows(y), ss.class_rows(y));
      return total;
    }
    case RegimeDiscrepancy::w1: {
      double total = 0.0;
      for (int y = 0; y < t.class_count(); ++y) total += wasserstein1(tt.class_rows(y), ss.class_rows(y));
      return total / t.class_count();
    }
    case RegimeDiscrepancy::ipm_feature:
      return ipm_feature_stat(matches_latent(regime) ? o.latent_models : o.input_models, tt, ss, false);
  }
  return 0.0;
}

}  // namespace dcond
