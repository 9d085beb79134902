#pragma once

#include "dcond/data.hpp"
#include "dcond/kernels.hpp"
#include "dcond/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dcond {

enum class ModelProvenance { random_init, pretrained, trajectory_snapshots };
std::string to_string(ModelProvenance p);

/// Finite stand-in for a hypothesis class.
struct ModelBatch {
  std::vector<Mlp> models;
  ModelProvenance provenance = ModelProvenance::random_init;
};

void validate(const ModelBatch& batch);
ModelBatch random_model_batch(const std::vector<int>& widths, Activation act, int count,
                              std::uint64_t seed);

/// max over models of sum_y |mean h(T^y) - mean h(S^y)|^2, where h is the
/// embedding, or every layer output summed when `layerwise`.
double ipm_feature_stat(const ModelBatch& batch, const LabeledDataset& t, const LabeledDataset& s,
                        bool layerwise = false);

enum class GradientMode { per_class, contrastive };

double gradient_discrepancy(const ModelBatch& batch, const LabeledDataset& t,
                            const LabeledDataset& s, GradientMode mode,
                            Loss loss = Loss::cross_entropy);

/// Mean and population-variance mismatch of the embedding, per class.
double moment_discrepancy(const ModelBatch& batch, const LabeledDataset& t, const LabeledDataset& s);

double hausdorff_distance(const Eigen::MatrixXd& t, const Eigen::MatrixXd& s);

/// Frequencies drawn from N(0, I), one per row.
Eigen::MatrixXd sample_frequencies(Eigen::Index dim, int count, std::uint64_t seed);
/// max over frequency rows t of |F_T(t) - F_S(t)| for empirical characteristic functions.
double characteristic_discrepancy(const Eigen::MatrixXd& t, const Eigen::MatrixXd& s,
                                  const Eigen::MatrixXd& freqs);
double characteristic_discrepancy(const Eigen::MatrixXd& t, const Eigen::MatrixXd& s, int count,
                                  std::uint64_t seed);

/// max over models of |L(h, T) - L(h, S)|.
double max_loss_gap(const ModelBatch& h, const LabeledDataset& t, const LabeledDataset& s, Loss loss);

/// First index attaining the minimum mean loss on d.
std::size_t empirical_risk_minimizer(const ModelBatch& h, const LabeledDataset& d, Loss loss);

struct GeneralizationDiscrepancy {
  double gd = 0.0;
  double vd = 0.0;
  std::optional<double> pd;
  std::size_t selected_on_t = 0;
  std::size_t selected_on_s = 0;
};

/// vd is the largest |h*_T(x) - h*_S(x)|_inf over the rows of `eval_points`.
GeneralizationDiscrepancy generalization_discrepancy_finite(const ModelBatch& h,
                                                            const LabeledDataset& t,
                                                            const LabeledDataset& s, Loss loss,
                                                            const Eigen::MatrixXd& eval_points,
                                                            bool want_pd);

/// Rows of t followed by `uniform_count` uniform draws from [0,1]^n.
Eigen::MatrixXd value_evaluation_sample(const Eigen::MatrixXd& t, int uniform_count,
                                        std::uint64_t seed);

struct HierarchyCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

struct DiscrepancyReport {
  std::map<std::string, double> values;
  std::vector<HierarchyCheck> checks;
  std::map<std::string, std::string> hyperparameters;

  std::string to_json() const;
  static DiscrepancyReport from_json(const std::string& text);
};

HierarchyCheck make_check(std::string name, double lhs, double rhs);

struct HierarchyOptions {
  std::optional<KernelSpec> kernel;  // default: Gaussian with median-heuristic scale on T
  int cd_frequencies = 128;
  std::uint64_t cd_seed = 0;
  int vd_uniform = 256;
  std::uint64_t vd_seed = 0;
  Loss loss = Loss::cross_entropy;
  bool parameter_discrepancy = true;
};

/// Every discrepancy that the inputs support, computed per class where the
/// definition is per-class, plus the upper-bound checks gd <= 2 dd and
/// cd <= ipm over a test class containing the same frequencies.
DiscrepancyReport hierarchy_report(const LabeledDataset& t, const LabeledDataset& s,
                                   const ModelBatch& h, const HierarchyOptions& options = {});

/// Point-set discrepancies only (mmd, w1, hausdorff, cd), per class.
/// `metrics` selects a subset; empty means all four.
DiscrepancyReport point_set_report(const LabeledDataset& t, const LabeledDataset& s,
                                   const std::vector<std::string>& metrics,
                                   const HierarchyOptions& options = {});

}  // namespace dcond
