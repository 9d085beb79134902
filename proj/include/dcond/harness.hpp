#pragma once

#include "dcond/condense.hpp"
#include "dcond/data.hpp"
#include "dcond/discrepancy.hpp"
#include "dcond/method_config.hpp"
#include "dcond/spaces.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dcond {

struct RobustnessConfig {
  double epsilon = 0.0;
  int steps = 10;
};

struct EvalConfig {
  std::vector<std::vector<int>> architectures = {{64, 64}};  // hidden widths
  Activation activation = Activation::relu;
  int repeats = 5;
  TrainConfig train{0.05, 100, 64, Loss::cross_entropy, 0};
  std::optional<RobustnessConfig> robustness;
  int hypotheses = 8;  // finite hypothesis batch for the discrepancy report
  bool concurrent = true;
};

struct RunConfig {
  std::filesystem::path dataset;
  int per_class = 1;
  InitMode init = InitMode::subsample;
  MethodConfig method;
  EvalConfig evaluation;
  Regime regime = Regime::input_input;
  std::optional<int> latent_dim;
  double train_fraction = 0.8;
  std::optional<std::filesystem::path> output;
  std::uint64_t seed = 0;
};

/// Paths inside the config resolve relative to `base_dir`.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_json(const RunConfig& cfg);

struct ArchitectureScore {
  std::vector<int> widths;  // full widths including input and classes
  std::vector<double> accuracies;
  double mean = 0.0, std = 0.0;
  std::vector<double> baseline_accuracies;
  double baseline_mean = 0.0, baseline_std = 0.0;
  std::optional<double> robust_mean;
  std::optional<double> baseline_robust_mean;
};

struct EvalReport {
  std::vector<ArchitectureScore> architectures;
  std::optional<DiscrepancyReport> discrepancy;
  std::map<std::string, std::string> hyperparameters;
  std::map<std::string, double> summary;  // e.g. condensed/baseline accuracy, gd, dp counts

  std::string to_json() const;
};

/// Trains R fresh models per architecture on the synthetic set and on the
/// real training split (same initializations and shuffles) and scores both
/// on the held-out split.
EvalReport evaluate_synthetic(const LabeledDataset& synthetic, const LabeledDataset& real_train,
                              const LabeledDataset& real_test, const EvalConfig& cfg, std::uint64_t seed);

struct RunResult {
  CondenseResult condensed;
  EvalReport report;
  std::map<std::string, double> timings;  // seconds per stage, kept out of the report
  std::optional<LinearAutoencoder> autoencoder;
  NormalizationParams normalization;
  LabeledDataset train, test;
};

/// load -> normalize -> split -> (autoencoder) -> init -> condense -> evaluate -> report.
RunResult run(const RunConfig& cfg);

/// run() then writes synthetic.csv (+ meta), report.json, steps.csv,
/// timings.json, plots and, when fitted, autoencoder.json into `out`.
/// Files written before a failure are removed.
RunResult run_and_write(const RunConfig& cfg, const std::filesystem::path& out);

/// Standalone discrepancy computation between two dataset files.
DiscrepancyReport discrepancy_command(const std::filesystem::path& a, const std::filesystem::path& b,
                                      const std::vector<std::string>& metrics, std::uint64_t seed = 0);

/// Evaluates a synthetic CSV against a real CSV (normalized; 80/20 split).
EvalReport evaluate_command(const std::filesystem::path& synthetic, const std::filesystem::path& real,
                            const EvalConfig& cfg, std::uint64_t seed = 0);

}  // namespace dcond
