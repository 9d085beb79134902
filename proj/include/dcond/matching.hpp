#pragma once

#include "dcond/data.hpp"
#include "dcond/discrepancy.hpp"
#include "dcond/kernels.hpp"
#include "dcond/mlp.hpp"
#include "dcond/rng.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dcond {

enum class MatchMethod { dm, gm, mmd, moment, sam };
std::string to_string(MatchMethod m);

struct MatchOptions {
  MatchMethod method = MatchMethod::dm;
  Loss loss = Loss::cross_entropy;  // gm
  GradientMode gradient_mode = GradientMode::per_class;
  KernelSpec kernel = KernelSpec::gaussian(1.0);
  /// Match mean random Fourier features (kernel must be random_feature)
  /// instead of network embeddings or kernel double sums.
  bool feature_embedding = false;
  std::optional<double> merf_sigma;  // noise on the mean feature embedding of T
  std::optional<double> grad_sigma;  // noise on clipped per-class gradients of T
  double clip_norm = 1.0;
  std::optional<double> curvature_rho;
  int power_iters = 10;
  std::uint64_t curvature_seed = 0;
};

struct MatchValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d value / d s, one row per synthetic row
  double curvature = 0.0;  // mean lambda+ over models when the curvature term is on
};

/// Matching objective against a fixed real set. Statistics of T are computed
/// once at construction (one construction per model refresh); the value is
/// the mean over models of the per-model discrepancy summed over classes.
class MatchingObjective {
 public:
  MatchingObjective(MatchOptions options, std::vector<Mlp> models, LabeledDataset t,
                    Rng* noise_rng = nullptr);

  MatchValue evaluate(const Eigen::MatrixXd& s, const Labels& s_labels) const;
  /// Number of Gaussian-mechanism applications made while building the targets.
  int mechanism_invocations() const { return invocations_; }
  const MatchOptions& options() const { return options_; }
  const std::vector<Mlp>& models() const { return models_; }

 private:
  struct ClassTargets {
    Eigen::VectorXd mean, var;                 // dm / moment
    std::vector<Eigen::VectorXd> attention;    // sam, one entry per matched layer
    Eigen::VectorXd grad;                      // gm
  };

  MatchValue evaluate_model(std::size_t m, const std::vector<Eigen::MatrixXd>& s_blocks,
                            const std::vector<std::vector<Eigen::Index>>& rows,
                            Eigen::Index s_rows, const Eigen::MatrixXd& s,
                            const Labels& s_labels) const;
  MatchValue evaluate_kernel(const std::vector<Eigen::MatrixXd>& s_blocks,
                             const std::vector<std::vector<Eigen::Index>>& rows,
                             Eigen::Index s_rows, Eigen::Index dim) const;

  MatchOptions options_;
  std::vector<Mlp> models_;
  LabeledDataset t_;
  std::vector<Eigen::MatrixXd> t_blocks_;
  std::vector<std::vector<ClassTargets>> targets_;  // [model][class]
  std::vector<double> kernel_tt_;                   // mmd: mean K(T^y, T^y)
  std::vector<Eigen::VectorXd> feature_means_;      // embedding route
  int invocations_ = 0;
};

/// Layers whose attention maps are matched: every hidden layer, or the logits
/// for a network without hidden layers.
std::vector<int> attention_layers(const Mlp& m);
/// Index of the embedding among the forward features.
int embedding_layer(const Mlp& m);

}  // namespace dcond
