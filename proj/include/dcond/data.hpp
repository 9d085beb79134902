#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dcond {

using Labels = std::vector<int>;

/// Per-feature min-max scaling recorded so normalized data can be mapped back.
struct NormalizationParams {
  Eigen::VectorXd minimum;
  Eigen::VectorXd range;  // max - min; zero for constant features

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;
};

/// Feature matrix (one sample per row) with dense integer class labels.
class LabeledDataset {
 public:
  /// Validates: N >= 1, labels in [0, C), one label per row, finite entries.
  LabeledDataset(Eigen::MatrixXd features, Labels labels, int class_count);

  const Eigen::MatrixXd& features() const { return features_; }
  const Labels& labels() const { return labels_; }
  int class_count() const { return class_count_; }
  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }

  /// Rows with the given label, in increasing row order.
  Eigen::MatrixXd class_rows(int label) const;
  LabeledDataset subset(const std::vector<std::size_t>& rows) const;
  /// Same dataset with rows grouped by class (stable within a class).
  LabeledDataset class_major() const;
  LabeledDataset with_features(Eigen::MatrixXd features) const;

 private:
  Eigen::MatrixXd features_;
  Labels labels_;
  int class_count_;
};

struct ClassPartition {
  std::vector<std::vector<std::size_t>> indices;  // indices[y] = rows of class y
};

ClassPartition per_class_partition(const LabeledDataset& d);

/// Learnable condensed set: per_class rows for each class, laid out class-major.
class SyntheticDataset {
 public:
  SyntheticDataset(Eigen::MatrixXd features, int class_count, int per_class, std::string origin,
                   std::uint64_t seed = 0);

  const Eigen::MatrixXd& features() const { return features_; }
  const Labels& labels() const { return labels_; }
  int class_count() const { return class_count_; }
  int per_class() const { return per_class_; }
  const std::string& origin() const { return origin_; }
  std::uint64_t seed() const { return seed_; }
  Eigen::Index size() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }

  Eigen::MatrixXd class_rows(int label) const {
    return features_.middleRows(static_cast<Eigen::Index>(label) * per_class_, per_class_);
  }
  SyntheticDataset with_features(Eigen::MatrixXd features, std::string origin) const;
  LabeledDataset as_labeled() const;

 private:
  Eigen::MatrixXd features_;
  Labels labels_;
  int class_count_;
  int per_class_;
  std::string origin_;
  std::uint64_t seed_;
};

Labels class_major_labels(int class_count, int per_class);

// ---- ingestion and persistence -------------------------------------------

LabeledDataset load_dataset(const std::filesystem::path& path);
LabeledDataset parse_dataset_csv(const std::string& text);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& d);
std::string format_dataset_csv(const Eigen::MatrixXd& features, const Labels& labels);

struct NormalizedDataset {
  LabeledDataset data;
  NormalizationParams params;
};

NormalizedDataset normalize_features(const LabeledDataset& d);

enum class InitMode { subsample, gaussian_noise };

SyntheticDataset init_synthetic(const LabeledDataset& d, int per_class, InitMode mode,
                                std::uint64_t seed);

/// Writes `path` (CSV) and `path` + ".meta.json" (origin, seed, per-class size,
/// optional normalization parameters).
void save_synthetic(const std::filesystem::path& path, const SyntheticDataset& s,
                    const std::optional<NormalizationParams>& normalization = std::nullopt);
SyntheticDataset load_synthetic(const std::filesystem::path& path);

struct TrainTestSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Stratified split: each class contributes round(train_fraction * n_y) rows
/// (at least one) to train, the remainder to test.
TrainTestSplit stratified_split(const LabeledDataset& d, double train_fraction,
                                std::uint64_t seed);

}  // namespace dcond
