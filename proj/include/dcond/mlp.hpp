#pragma once

#include "dcond/data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dcond {

enum class Activation { relu, tanh };
enum class Loss { cross_entropy, mse };

std::string to_string(Activation a);
std::string to_string(Loss l);
Activation parse_activation(const std::string& s);
Loss parse_loss(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out (empty when the network has no biases)
};

/// Activations of one batch: features[l] is the post-activation output of
/// hidden layer l (rows = samples); features.back() holds the logits.
struct ForwardPass {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;       // pre-activations per layer
  std::vector<Eigen::MatrixXd> features;  // post-activations per layer, logits last
};

struct Gradients {
  double loss = 0.0;            // mean loss over the batch
  Eigen::VectorXd params;       // d(mean loss)/d(theta), flat layout
  Eigen::MatrixXd inputs;       // d(mean loss)/d(x), one row per sample
};

/// Fully connected network with widths [n, w_1, ..., w_L, C].
class Mlp {
 public:
  /// He-style initialization: W ~ N(0, 2 / fan_in), biases zero.
  static Mlp init(std::vector<int> widths, Activation activation, std::uint64_t seed,
                  bool bias = true);

  Mlp(std::vector<int> widths, Activation activation, std::vector<DenseLayer> layers,
      bool bias = true);

  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  bool has_bias() const { return bias_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int hidden_layers() const { return static_cast<int>(widths_.size()) - 2; }
  Eigen::Index param_count() const;
  bool same_architecture(const Mlp& other) const;

  Eigen::VectorXd flat_params() const;
  Mlp with_params(const Eigen::VectorXd& theta) const;

  ForwardPass forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const;
  /// Output of the last hidden layer, or the logits for a network with no
  /// hidden layer. This is the feature map used by distribution matching.
  Eigen::MatrixXd embedding(const Eigen::MatrixXd& x) const;
  int embedding_dim() const;

  /// Exact reverse-mode gradients of the mean loss.
  Gradients backward(const Eigen::MatrixXd& x, const Labels& y, Loss loss) const;

  /// Gradient w.r.t. inputs of sum_i sum_l <seeds[l].row(i), features[l].row(i)>.
  /// `seeds` has one entry per forward feature (hidden layers then logits);
  /// empty matrices are treated as zero.
  Eigen::MatrixXd feature_vjp(const Eigen::MatrixXd& x,
                              const std::vector<Eigen::MatrixXd>& seeds) const;

  /// Per-sample d/dt grad_x l(theta + t * direction, x_i, y_i) at t = 0, which
  /// equals grad_x <grad_theta l(theta, x_i, y_i), direction>. Exact
  /// forward-over-reverse pass; rows are per-sample (not batch averaged).
  Eigen::MatrixXd input_grad_directional(const Eigen::MatrixXd& x, const Labels& y, Loss loss,
                                         const Eigen::VectorXd& direction) const;

  /// Per-output parameter Jacobian at one input, C x P.
  Eigen::MatrixXd param_jacobian(const Eigen::VectorXd& x) const;

 private:
  Eigen::MatrixXd backprop(const ForwardPass& pass, Eigen::MatrixXd logit_grad,
                           const std::vector<Eigen::MatrixXd>* hidden_seeds,
                           Eigen::VectorXd* param_grad) const;

  std::vector<int> widths_;
  Activation activation_;
  std::vector<DenseLayer> layers_;
  bool bias_;
};

struct ForwardResult {
  Eigen::VectorXd logits;
  std::vector<Eigen::VectorXd> features;  // L+1 entries: hidden layers then logits
};

ForwardResult forward_with_features(const Mlp& m, const Eigen::VectorXd& x);

/// Mean loss over a batch.
double mean_loss(const Mlp& m, const Eigen::MatrixXd& x, const Labels& y, Loss loss);
/// Per-sample losses.
Eigen::VectorXd sample_losses(const Eigen::MatrixXd& logits, const Labels& y, Loss loss);
double accuracy(const Mlp& m, const LabeledDataset& d);

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 20;  // 0 leaves the parameters untouched
  int batch_size = 64;
  Loss loss = Loss::cross_entropy;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

/// Flattened parameter snapshots; snapshot 0 is the initialization.
struct Trajectory {
  std::vector<Eigen::VectorXd> snapshots;
};

struct TrainResult {
  Mlp model;
  std::optional<Trajectory> trajectory;
  std::vector<double> epoch_losses;
};

/// Minibatch SGD with a seed-fixed shuffle per epoch.
TrainResult sgd_train(const Mlp& m, const LabeledDataset& d, const TrainConfig& cfg,
                      bool record = false);
/// Same as sgd_train on a raw feature matrix (class labels supplied separately).
TrainResult sgd_train(const Mlp& m, const Eigen::MatrixXd& x, const Labels& y,
                      const TrainConfig& cfg, bool record = false);

/// l_inf PGD with sign steps, projected to the eps-ball and [0,1]^n. Returns
/// the iterate with the highest loss seen (the clean input counts).
Eigen::VectorXd pgd_attack(const Mlp& m, const Eigen::VectorXd& x, int y, double eps, int steps,
                           double step_size, Loss loss = Loss::cross_entropy);
/// Row-wise pgd_attack over a batch.
Eigen::MatrixXd pgd_attack_batch(const Mlp& m, const Eigen::MatrixXd& x, const Labels& y,
                                 double eps, int steps, double step_size,
                                 Loss loss = Loss::cross_entropy);

using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Power iteration on finite-difference Hessian-vector products of `grad`
/// at `theta`. Returns the signed Rayleigh quotient of the dominant direction.
double lambda_max_estimate(const GradientFn& grad, const Eigen::VectorXd& theta, int iters,
                           std::uint64_t seed = 0, Eigen::VectorXd* eigvec = nullptr);
double lambda_max_estimate(const Mlp& m, const LabeledDataset& d, Loss loss, int iters,
                           std::uint64_t seed = 0);
/// Central finite-difference step used for HVPs: 1e-4 * (1 + |theta|).
double hvp_step(const Eigen::VectorXd& theta);

// ---- checkpoints -----------------------------------------------------------

std::string checkpoint_json(const Mlp& m);
Mlp parse_checkpoint(const std::string& text);
std::string trajectory_json(const Mlp& architecture, const Trajectory& t);
Trajectory parse_trajectory(const std::string& text);

}  // namespace dcond
