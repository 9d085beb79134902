#pragma once

#include "dcond/coreset.hpp"
#include "dcond/data.hpp"
#include "dcond/method_config.hpp"
#include "dcond/privacy.hpp"
#include "dcond/spaces.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dcond {

struct StepRecord {
  int step = 0;
  double objective = 0.0;    // method loss + weighted regularizers
  double method_loss = 0.0;
  std::vector<double> regularizers;  // unweighted, in config order
  double grad_norm = 0.0;
};

struct CondenseLog {
  std::vector<std::string> regularizer_names;
  std::vector<StepRecord> steps;
  PrivacyLedger privacy;
  int refreshes = 0;

  /// step,objective,method_loss,<regularizers...>,grad_norm
  std::string csv() const;
  /// Share of consecutive step pairs whose objective did not increase (1 for < 2 steps).
  double nonincreasing_fraction() const;
};

struct CondenseResult {
  SyntheticDataset s;              // input-space features
  Eigen::MatrixXd variables;       // optimized coordinates (latent when the regime says so)
  CondenseLog log;
  std::optional<double> inner_lr;  // learned step size of the unrolled flavors
  std::vector<CoverResult> covers; // k-center, per class
};

/// Runs the configured method from s0. Without a regime the variables are the
/// input-space features and T is matched as given.
CondenseResult condense(const MethodConfig& cfg, const LabeledDataset& t, const SyntheticDataset& s0,
                        const std::optional<RegimeSetup>& regime = std::nullopt);

/// Kernel named by the config; the scale defaults to the median heuristic on
/// `t`, and model-based families use `models`.
KernelSpec resolve_kernel(const KernelConfig& k, const Eigen::MatrixXd& t, const std::vector<Mlp>& models);

/// Identity regime over the given real features.
RegimeSetup identity_regime(const Eigen::MatrixXd& t);

}  // namespace dcond
