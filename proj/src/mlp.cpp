#include "dcond/mlp.hpp"

#include "dcond/error.hpp"
#include "dcond/rng.hpp"
#include "dcond/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(Loss l) { return l == Loss::cross_entropy ? "cross_entropy" : "mse"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  fail(ErrorKind::config, "unknown activation '" + s + "'");
}

Loss parse_loss(const std::string& s) {
  if (s == "cross_entropy") return Loss::cross_entropy;
  if (s == "mse") return Loss::mse;
  fail(ErrorKind::config, "unknown loss '" + s + "'");
}

namespace {

MatrixXd activate(const MatrixXd& z, Activation a) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// sigma'(z), given z and sigma(z)
MatrixXd activation_slope(const MatrixXd& z, const MatrixXd& out, Activation a) {
  if (a == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - out.array().square()).matrix();
}

MatrixXd activation_curvature(const MatrixXd& z, const MatrixXd& out, Activation a) {
  if (a == Activation::relu) return MatrixXd::Zero(z.rows(), z.cols());
  return (-2.0 * out.array() * (1.0 - out.array().square())).matrix();
}

MatrixXd softmax_rows(const MatrixXd& z) {
  MatrixXd p(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

void check_labels(const Labels& y, Index rows, int classes) {
  require(static_cast<Index>(y.size()) == rows, ErrorKind::shape,
          "batch has " + std::to_string(rows) + " rows but " + std::to_string(y.size()) +
              " labels");
  for (int v : y)
    require(v >= 0 && v < classes, ErrorKind::label,
            "label " + std::to_string(v) + " outside [0, " + std::to_string(classes) + ")");
}

// Per-sample gradient of the loss w.r.t. the logits (not batch averaged).
MatrixXd logit_gradient(const MatrixXd& z, const Labels& y, Loss loss) {
  MatrixXd g = loss == Loss::cross_entropy ? softmax_rows(z) : MatrixXd(2.0 * z);
  for (Index i = 0; i < z.rows(); ++i) g(i, y[static_cast<std::size_t>(i)]) -= loss == Loss::mse ? 2.0 : 1.0;
  return g;
}

}  // namespace

Mlp Mlp::init(std::vector<int> widths, Activation activation, std::uint64_t seed, bool bias) {
  require(widths.size() >= 2, ErrorKind::architecture, "an Mlp needs input and output widths");
  for (int w : widths) require(w >= 1, ErrorKind::architecture, "layer widths must be >= 1");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / widths[l]));
    DenseLayer layer;
    layer.weight.resize(widths[l + 1], widths[l]);
    for (Index c = 0; c < layer.weight.cols(); ++c)
      for (Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = normal(rng);
    if (bias) layer.bias = VectorXd::Zero(widths[l + 1]);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(widths), activation, std::move(layers), bias);
}

Mlp::Mlp(std::vector<int> widths, Activation activation, std::vector<DenseLayer> layers, bool bias)
    : widths_(std::move(widths)), activation_(activation), layers_(std::move(layers)), bias_(bias) {
  require(widths_.size() >= 2, ErrorKind::architecture, "an Mlp needs input and output widths");
  require(layers_.size() + 1 == widths_.size(), ErrorKind::architecture,
          "layer count does not match widths");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    require(layer.weight.rows() == widths_[l + 1] && layer.weight.cols() == widths_[l],
            ErrorKind::architecture, "weight shape mismatch in layer " + std::to_string(l));
    require(bias_ ? layer.bias.size() == widths_[l + 1] : layer.bias.size() == 0,
            ErrorKind::architecture, "bias shape mismatch in layer " + std::to_string(l));
    require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorKind::numerical,
            "non-finite parameter in layer " + std::to_string(l));
  }
}

Index Mlp::param_count() const {
  Index p = 0;
  for (const auto& layer : layers_) p += layer.weight.size() + layer.bias.size();
  return p;
}

bool Mlp::same_architecture(const Mlp& other) const {
  return widths_ == other.widths_ && activation_ == other.activation_ && bias_ == other.bias_;
}

// Layout: per layer, the weight in column-major order, then the bias.
VectorXd Mlp::flat_params() const {
  VectorXd theta(param_count());
  Index at = 0;
  for (const auto& layer : layers_) {
    theta.segment(at, layer.weight.size()) =
        Eigen::Map<const VectorXd>(layer.weight.data(), layer.weight.size());
    at += layer.weight.size();
    theta.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  return theta;
}

Mlp Mlp::with_params(const VectorXd& theta) const {
  require(theta.size() == param_count(), ErrorKind::shape,
          "parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
              std::to_string(param_count()));
  std::vector<DenseLayer> layers = layers_;
  Index at = 0;
  for (auto& layer : layers) {
    Eigen::Map<VectorXd>(layer.weight.data(), layer.weight.size()) =
        theta.segment(at, layer.weight.size());
    at += layer.weight.size();
    layer.bias = theta.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
  return Mlp(widths_, activation_, std::move(layers), bias_);
}

ForwardPass Mlp::forward(const MatrixXd& x) const {
  require(x.cols() == input_dim(), ErrorKind::shape,
          "input has " + std::to_string(x.cols()) + " columns, network expects " +
              std::to_string(input_dim()));
  ForwardPass pass;
  pass.input = x;
  const std::size_t L = layers_.size();
  for (std::size_t l = 0; l < L; ++l) {
    const MatrixXd& in = l == 0 ? x : pass.features.back();
    MatrixXd z = in * layers_[l].weight.transpose();
    if (bias_) z.rowwise() += layers_[l].bias.transpose();
    pass.features.push_back(l + 1 == L ? z : activate(z, activation_));
    pass.pre.push_back(std::move(z));
  }
  return pass;
}

MatrixXd Mlp::logits(const MatrixXd& x) const { return forward(x).features.back(); }

MatrixXd Mlp::embedding(const MatrixXd& x) const {
  auto pass = forward(x);
  return layers_.size() == 1 ? pass.features.back() : pass.features[layers_.size() - 2];
}

int Mlp::embedding_dim() const {
  return layers_.size() == 1 ? widths_.back() : widths_[widths_.size() - 2];
}

MatrixXd Mlp::backprop(const ForwardPass& pass, MatrixXd grad,
                       const std::vector<MatrixXd>* seeds, VectorXd* param_grad) const {
  const std::size_t L = layers_.size();
  if (param_grad) *param_grad = VectorXd::Zero(param_count());
  // offsets of each layer inside the flat parameter vector
  std::vector<Index> offset(L, 0);
  for (std::size_t l = 1; l < L; ++l)
    offset[l] = offset[l - 1] + layers_[l - 1].weight.size() + layers_[l - 1].bias.size();

  for (std::size_t l = L; l-- > 0;) {
    const MatrixXd& in = l == 0 ? pass.input : pass.features[l - 1];
    if (param_grad) {
      MatrixXd gw = grad.transpose() * in;
      param_grad->segment(offset[l], gw.size()) = Eigen::Map<const VectorXd>(gw.data(), gw.size());
      if (bias_)
        param_grad->segment(offset[l] + gw.size(), grad.cols()) = grad.colwise().sum().transpose();
    }
    MatrixXd up = grad * layers_[l].weight;
    if (l == 0) return up;
    if (seeds && l - 1 < seeds->size() && (*seeds)[l - 1].size() > 0) up += (*seeds)[l - 1];
    grad = up.cwiseProduct(activation_slope(pass.pre[l - 1], pass.features[l - 1], activation_));
  }
  return MatrixXd();  // unreachable: L >= 1
}

Gradients Mlp::backward(const MatrixXd& x, const Labels& y, Loss loss) const {
  require(x.rows() >= 1, ErrorKind::shape, "empty batch");
  check_labels(y, x.rows(), output_dim());
  auto pass = forward(x);
  const MatrixXd& z = pass.features.back();
  Gradients g;
  g.loss = sample_losses(z, y, loss).mean();
  MatrixXd gz = logit_gradient(z, y, loss) / static_cast<double>(x.rows());
  g.inputs = backprop(pass, std::move(gz), nullptr, &g.params);
  return g;
}

MatrixXd Mlp::feature_vjp(const MatrixXd& x, const std::vector<MatrixXd>& seeds) const {
  require(seeds.size() == layers_.size(), ErrorKind::shape,
          "feature seeds must have one entry per layer output");
  auto pass = forward(x);
  for (std::size_t l = 0; l < seeds.size(); ++l)
    require(seeds[l].size() == 0 || (seeds[l].rows() == x.rows() &&
                                     seeds[l].cols() == pass.features[l].cols()),
            ErrorKind::shape, "feature seed shape mismatch at layer " + std::to_string(l));
  MatrixXd top = seeds.back().size() > 0 ? seeds.back()
                                         : MatrixXd::Zero(x.rows(), output_dim());
  return backprop(pass, std::move(top), &seeds, nullptr);
}

MatrixXd Mlp::input_grad_directional(const MatrixXd& x, const Labels& y, Loss loss,
                                     const VectorXd& direction) const {
  require(direction.size() == param_count(), ErrorKind::shape, "direction size mismatch");
  check_labels(y, x.rows(), output_dim());
  const Mlp v = with_params(direction);  // same layout: V_l and c_l
  const std::size_t L = layers_.size();
  auto pass = forward(x);

  // forward tangent: RZ_l = A_{l-1} V_l^T + RA_{l-1} W_l^T + c_l
  std::vector<MatrixXd> rz(L);
  MatrixXd ra;  // tangent of the previous layer's output (zero for the input)
  for (std::size_t l = 0; l < L; ++l) {
    const MatrixXd& in = l == 0 ? x : pass.features[l - 1];
    rz[l] = in * v.layers_[l].weight.transpose();
    if (bias_) rz[l].rowwise() += v.layers_[l].bias.transpose();
    if (l > 0) rz[l] += ra * layers_[l].weight.transpose();
    if (l + 1 < L)
      ra = rz[l].cwiseProduct(activation_slope(pass.pre[l], pass.features[l], activation_));
  }

  // reverse pass and its tangent
  const MatrixXd& z = pass.features.back();
  MatrixXd d = logit_gradient(z, y, loss);
  MatrixXd rd;
  if (loss == Loss::mse) {
    rd = 2.0 * rz[L - 1];
  } else {
    MatrixXd p = softmax_rows(z);
    rd = p.cwiseProduct(rz[L - 1]);
    VectorXd pr = rd.rowwise().sum();
    rd -= p.cwiseProduct(pr.replicate(1, p.cols()));
  }
  for (std::size_t l = L; l-- > 0;) {
    MatrixXd da = d * layers_[l].weight;
    MatrixXd rda = rd * layers_[l].weight + d * v.layers_[l].weight;
    if (l == 0) return rda;
    const MatrixXd& zp = pass.pre[l - 1];
    const MatrixXd& ap = pass.features[l - 1];
    MatrixXd s1 = activation_slope(zp, ap, activation_);
    MatrixXd s2 = activation_curvature(zp, ap, activation_);
    rd = s2.cwiseProduct(rz[l - 1]).cwiseProduct(da) + s1.cwiseProduct(rda);
    d = s1.cwiseProduct(da);
  }
  return MatrixXd();
}

MatrixXd Mlp::param_jacobian(const VectorXd& x) const {
  auto pass = forward(x.transpose());
  MatrixXd jac(output_dim(), param_count());
  for (int c = 0; c < output_dim(); ++c) {
    MatrixXd seed = MatrixXd::Zero(1, output_dim());
    seed(0, c) = 1.0;
    VectorXd g;
    backprop(pass, std::move(seed), nullptr, &g);
    jac.row(c) = g.transpose();
  }
  return jac;
}

ForwardResult forward_with_features(const Mlp& m, const VectorXd& x) {
  auto pass = m.forward(x.transpose());
  ForwardResult r;
  r.logits = pass.features.back().row(0).transpose();
  for (const auto& f : pass.features) r.features.push_back(f.row(0).transpose());
  return r;
}

VectorXd sample_losses(const MatrixXd& z, const Labels& y, Loss loss) {
  check_labels(y, z.rows(), static_cast<int>(z.cols()));
  VectorXd out(z.rows());
  for (Index i = 0; i < z.rows(); ++i) {
    const int t = y[static_cast<std::size_t>(i)];
    if (loss == Loss::cross_entropy) {
      const double m = z.row(i).maxCoeff();
      out(i) = m + std::log((z.row(i).array() - m).exp().sum()) - z(i, t);
    } else {
      VectorXd e = z.row(i).transpose();
      e(t) -= 1.0;
      out(i) = e.squaredNorm();
    }
  }
  return out;
}

double mean_loss(const Mlp& m, const MatrixXd& x, const Labels& y, Loss loss) {
  return sample_losses(m.logits(x), y, loss).mean();
}

double accuracy(const Mlp& m, const LabeledDataset& d) {
  MatrixXd z = m.logits(d.features());
  Index hits = 0;
  for (Index i = 0; i < z.rows(); ++i) {
    Index arg = 0;
    z.row(i).maxCoeff(&arg);
    hits += arg == d.labels()[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(z.rows());
}

void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate > 0.0 && std::isfinite(cfg.learning_rate), ErrorKind::config,
          "learning rate must be positive");
  require(cfg.epochs >= 0, ErrorKind::config, "epochs must be non-negative");
  require(cfg.batch_size >= 1, ErrorKind::config, "batch size must be >= 1");
}

TrainResult sgd_train(const Mlp& m, const LabeledDataset& d, const TrainConfig& cfg, bool record) {
  return sgd_train(m, d.features(), d.labels(), cfg, record);
}

TrainResult sgd_train(const Mlp& m, const MatrixXd& x, const Labels& y, const TrainConfig& cfg,
                      bool record) {
  validate(cfg);
  require(x.rows() >= 1, ErrorKind::empty_dataset, "cannot train on an empty set");
  check_labels(y, x.rows(), m.output_dim());
  const Index n = x.rows();
  VectorXd theta = m.flat_params();
  Mlp model = m;
  TrainResult out{m, std::nullopt, {}};
  if (record) out.trajectory = Trajectory{{theta}};

  std::vector<Index> order(static_cast<std::size_t>(n));
  MatrixXd xb;
  Labels yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index len = std::min<Index>(cfg.batch_size, n - start);
      xb.resize(len, x.cols());
      yb.resize(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        const Index r = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = x.row(r);
        yb[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(r)];
      }
      Gradients g = model.backward(xb, yb, cfg.loss);
      if (!std::isfinite(g.loss) || !g.params.allFinite())
        fail(ErrorKind::divergence, "training diverged in epoch " + std::to_string(epoch + 1));
      theta -= cfg.learning_rate * g.params;
      if (!theta.allFinite())
        fail(ErrorKind::divergence, "training diverged in epoch " + std::to_string(epoch + 1));
      model = model.with_params(theta);
      total += g.loss;
      ++batches;
    }
    out.epoch_losses.push_back(total / batches);
    if (record) out.trajectory->snapshots.push_back(theta);
  }
  out.model = model;
  return out;
}

VectorXd pgd_attack(const Mlp& m, const VectorXd& x, int y, double eps, int steps,
                    double step_size, Loss loss) {
  require(eps >= 0.0, ErrorKind::domain, "attack radius must be non-negative");
  const Labels label{y};
  MatrixXd cur = x.transpose();
  MatrixXd best = cur;
  double best_loss = mean_loss(m, cur, label, loss);
  if (eps == 0.0) return x;
  const MatrixXd lo = (cur.array() - eps).max(0.0).matrix();
  const MatrixXd hi = (cur.array() + eps).min(1.0).matrix();
  for (int s = 0; s < steps; ++s) {
    Gradients g = m.backward(cur, label, loss);
    cur += step_size * g.inputs.array().sign().matrix();
    cur = cur.cwiseMax(lo).cwiseMin(hi);
    const double l = mean_loss(m, cur, label, loss);
    if (l > best_loss) {
      best_loss = l;
      best = cur;
    }
  }
  return best.row(0).transpose();
}

MatrixXd pgd_attack_batch(const Mlp& m, const MatrixXd& x, const Labels& y, double eps, int steps,
                          double step_size, Loss loss) {
  MatrixXd out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    out.row(i) = pgd_attack(m, x.row(i).transpose(), y[static_cast<std::size_t>(i)], eps, steps,
                            step_size, loss)
                     .transpose();
  return out;
}

double hvp_step(const VectorXd& theta) { return 1e-4 * (1.0 + theta.norm()); }

double lambda_max_estimate(const GradientFn& grad, const VectorXd& theta, int iters,
                           std::uint64_t seed, VectorXd* eigvec) {
  require(iters >= 1, ErrorKind::domain, "power iteration needs at least one step");
  require(theta.size() >= 1, ErrorKind::shape, "empty parameter vector");
  const double h = hvp_step(theta);
  auto hvp = [&](const VectorXd& v) {
    VectorXd r = (grad(theta + h * v) - grad(theta - h * v)) / (2.0 * h);
    require(r.allFinite(), ErrorKind::numerical, "non-finite Hessian-vector product");
    return r;
  };
  Rng rng(seed);
  std::normal_distribution<double> normal;
  VectorXd v(theta.size());
  for (Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    VectorXd hv = hvp(v);
    lambda = v.dot(hv);
    const double norm = hv.norm();
    if (norm == 0.0) break;
    v = hv / norm;
  }
  lambda = v.dot(hvp(v));
  if (eigvec) *eigvec = v;
  return lambda;
}

double lambda_max_estimate(const Mlp& m, const LabeledDataset& d, Loss loss, int iters,
                           std::uint64_t seed) {
  auto grad = [&](const VectorXd& theta) {
    return m.with_params(theta).backward(d.features(), d.labels(), loss).params;
  };
  return lambda_max_estimate(grad, m.flat_params(), iters, seed);
}

// ---- checkpoints -----------------------------------------------------------

namespace {

nlohmann::ordered_json architecture_json(const Mlp& m) {
  nlohmann::ordered_json j;
  j["widths"] = m.widths();
  j["activation"] = to_string(m.activation());
  j["bias"] = m.has_bias();
  j["param_count"] = m.param_count();
  return j;
}

nlohmann::json parse_json(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string checkpoint_json(const Mlp& m) {
  auto j = architecture_json(m);
  j["params"] = to_std_vector(m.flat_params());
  return j.dump(2) + "\n";
}

Mlp parse_checkpoint(const std::string& text) {
  auto j = parse_json(text, "checkpoint");
  try {
    Mlp shell = Mlp::init(j.at("widths").get<std::vector<int>>(),
                          parse_activation(j.at("activation").get<std::string>()), 0,
                          j.at("bias").get<bool>());
    return shell.with_params(to_eigen(j.at("params").get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint: ") + e.what());
  }
}

std::string trajectory_json(const Mlp& architecture, const Trajectory& t) {
  auto j = architecture_json(architecture);
  auto snaps = nlohmann::ordered_json::array();
  for (const auto& s : t.snapshots) snaps.push_back(to_std_vector(s));
  j["snapshots"] = std::move(snaps);
  return j.dump(2) + "\n";
}

Trajectory parse_trajectory(const std::string& text) {
  auto j = parse_json(text, "trajectory");
  Trajectory t;
  try {
    for (const auto& s : j.at("snapshots")) t.snapshots.push_back(to_eigen(s.get<std::vector<double>>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("trajectory: ") + e.what());
  }
  for (const auto& s : t.snapshots)
    require(s.size() == t.snapshots.front().size(), ErrorKind::shape,
            "trajectory snapshots differ in dimension");
  return t;
}

}  // namespace dcond
