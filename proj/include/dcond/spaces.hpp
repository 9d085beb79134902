#pragma once

#include "dcond/data.hpp"
#include "dcond/discrepancy.hpp"
#include "dcond/kernels.hpp"

#include <Eigen/Dense>

#include <string>

namespace dcond {

/// Encoder z = W^T (x - mean), decoder x = W z + mean, W with orthonormal columns.
class LinearAutoencoder {
 public:
  LinearAutoencoder(Eigen::VectorXd mean, Eigen::MatrixXd basis);

  /// m = n, W = I, mean = 0.
  static LinearAutoencoder identity(Eigen::Index n);

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& basis() const { return basis_; }
  Eigen::Index input_dim() const { return basis_.rows(); }
  Eigen::Index latent_dim() const { return basis_.cols(); }

  Eigen::MatrixXd encode(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd decode(const Eigen::MatrixXd& z) const;
  Eigen::VectorXd encode_point(const Eigen::VectorXd& x) const;
  Encoder encoder() const;

  std::string to_json() const;
  static LinearAutoencoder from_json(const std::string& text);

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd basis_;
};

/// Top-m principal directions of the centred features; each column's
/// largest-magnitude entry is made positive.
LinearAutoencoder fit_linear_autoencoder(const LabeledDataset& t, int m);

enum class PushDirection { encode, decode };
Eigen::MatrixXd push_forward_dataset(const LinearAutoencoder& ae, const Eigen::MatrixXd& points,
                                     PushDirection direction);

/// Named <match>_<optimize>: input_latent matches in input space while the
/// variables live in latent space.
enum class Regime { input_input, input_latent, latent_input, latent_latent };
std::string to_string(Regime r);
Regime parse_regime(const std::string& s);
bool optimizes_latent(Regime r);
bool matches_latent(Regime r);

enum class RegimeDiscrepancy { mmd, w1, ipm_feature };

struct RegimeOptions {
  KernelSpec kernel = KernelSpec::gaussian(1.0);
  ModelBatch input_models;   // ipm_feature in input space
  ModelBatch latent_models;  // ipm_feature in latent space
};

/// x -> x A^T + b, the map from optimization variables to matched points.
struct AffineMap {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  /// Gradient w.r.t. the inputs given the gradient w.r.t. the outputs.
  Eigen::MatrixXd pullback(const Eigen::MatrixXd& g) const { return g * a; }
};

struct RegimeSetup {
  Regime regime;
  Eigen::MatrixXd matched_t;  // T in the matching space
  AffineMap to_match;         // variables -> matching space
  AffineMap to_input;         // variables -> input-space features
  bool clip_variables;        // box constraint only for input-space variables
  Eigen::MatrixXd initial_variables(const Eigen::MatrixXd& s0_features) const;
};

RegimeSetup make_regime(Regime regime, const LinearAutoencoder& ae, const Eigen::MatrixXd& t);

/// Evaluates the discrepancy for one quadrant. `variables` are S for
/// input-optimized regimes and Z for latent-optimized ones; labels follow
/// the synthetic rows.
double regime_objective(Regime regime, const LinearAutoencoder& ae, const LabeledDataset& t,
                        const Eigen::MatrixXd& variables, const Labels& synthetic_labels,
                        RegimeDiscrepancy disc, const RegimeOptions& options);

}  // namespace dcond
