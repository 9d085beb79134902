#pragma once

#include "dcond/augment.hpp"
#include "dcond/discrepancy.hpp"
#include "dcond/kernels.hpp"
#include "dcond/mlp.hpp"
#include "dcond/regularizers.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dcond {

enum class Method { dm, gm, mmd, moment, sam, krr, trajectory, bptt, cig_ridge, kcenter, kmeans };
std::string to_string(Method m);
Method parse_method(const std::string& s);
/// dm, gm, mmd, moment, sam.
bool is_matching(Method m);
bool is_coreset(Method m);

struct KMeansProxy {
  int k = 1;       // centers per class
  int period = 1;  // recompute every `period` outer steps
};

struct RobustOuter {
  double epsilon = 0.0;
  int steps = 5;
};

struct Variants {
  std::optional<SiameseOp> siamese;
  std::optional<int> multiform;  // formation factor r
  bool channel_multiform = false;
  bool contrastive = false;
  std::optional<double> curvature;  // rho
  std::optional<KMeansProxy> kmeans_proxy;
  std::optional<double> dp_merf;  // sigma
  std::optional<double> dp_grad;  // sigma
  std::optional<RobustOuter> robust_outer;
  std::optional<RobustOuter> ridge_robust;
  std::optional<int> rat_truncation;  // window
  std::optional<double> curvdc;       // weight on lambda_max
};

struct KernelConfig {
  std::string family = "gaussian";  // gaussian, gamma_exponential, random_feature, ntk, nfk
  std::optional<double> scale;      // absent: median heuristic on the real set
  double gamma = 2.0;
  int feature_dim = 256;
  std::uint64_t seed = 0;
};

struct ImageShape {
  int channels = 1, height = 1, width = 1;
  int size() const { return channels * height * width; }
};

struct MethodConfig {
  Method method = Method::dm;
  int steps = 100;
  double learning_rate = 0.05;
  std::string optimizer = "adam";  // adam or sgd
  int refresh = 10;
  int ensemble = 1;
  ModelProvenance provenance = ModelProvenance::random_init;
  int pretrain_epochs = 1;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::relu;
  KernelConfig kernel;
  double ridge = 1e-3;
  int inner_steps = 5;
  double inner_lr = 0.1;
  double fd_step = 1e-5;
  TrainConfig expert{0.1, 2, 64, Loss::cross_entropy, 0};
  int power_iters = 10;
  int kmeans_iters = 50;
  std::optional<ImageShape> image_shape;
  Variants variants;
  std::vector<RegularizerTerm> regularizers;
  bool clip = true;  // box [0,1] on input-space variables
  std::uint64_t seed = 0;
};

/// Throws a config error naming the offending field or variant pair.
void validate(const MethodConfig& cfg);

MethodConfig parse_method_config(const std::string& json_text);
/// Canonical JSON (every field, fixed key order).
std::string method_config_json(const MethodConfig& cfg);

}  // namespace dcond
