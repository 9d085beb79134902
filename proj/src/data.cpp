#include "dcond/data.hpp"

#include "dcond/error.hpp"
#include "dcond/rng.hpp"
#include "dcond/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <iterator>
#include <sstream>

namespace dcond {

Eigen::MatrixXd NormalizationParams::apply(const Eigen::MatrixXd& x) const {
  require(x.cols() == minimum.size(), ErrorKind::shape, "normalization dimension mismatch");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (range(j) > 0.0) {
      out.col(j) = (x.col(j).array() - minimum(j)) / range(j);
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

Eigen::MatrixXd NormalizationParams::invert(const Eigen::MatrixXd& x) const {
  require(x.cols() == minimum.size(), ErrorKind::shape, "normalization dimension mismatch");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.col(j) = x.col(j).array() * range(j) + minimum(j);
  }
  return out;
}

LabeledDataset::LabeledDataset(Eigen::MatrixXd features, Labels labels, int class_count)
    : features_(std::move(features)), labels_(std::move(labels)), class_count_(class_count) {
  require(features_.rows() >= 1, ErrorKind::empty_dataset, "dataset has no rows");
  require(features_.cols() >= 1, ErrorKind::shape, "dataset has no feature columns");
  require(static_cast<std::size_t>(features_.rows()) == labels_.size(), ErrorKind::shape,
          "feature rows (" + std::to_string(features_.rows()) + ") != labels (" +
              std::to_string(labels_.size()) + ")");
  require(class_count_ >= 1, ErrorKind::label, "class count must be positive");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    require(labels_[i] >= 0 && labels_[i] < class_count_, ErrorKind::label,
            "label " + std::to_string(labels_[i]) + " at row " + std::to_string(i) +
                " outside [0, " + std::to_string(class_count_) + ")");
  }
  require(features_.allFinite(), ErrorKind::validation, "features contain NaN or Inf");
}

Eigen::MatrixXd LabeledDataset::class_rows(int label) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) rows.push_back(static_cast<Eigen::Index>(i));
  }
  return features_(rows, Eigen::all);
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  Labels l;
  l.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] < labels_.size(), ErrorKind::shape, "subset row out of range");
    f.row(static_cast<Eigen::Index>(k)) = features_.row(static_cast<Eigen::Index>(rows[k]));
    l.push_back(labels_[rows[k]]);
  }
  return LabeledDataset(std::move(f), std::move(l), class_count_);
}

LabeledDataset LabeledDataset::class_major() const {
  std::vector<std::size_t> order(labels_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return labels_[a] < labels_[b]; });
  return subset(order);
}

LabeledDataset LabeledDataset::with_features(Eigen::MatrixXd features) const {
  return LabeledDataset(std::move(features), labels_, class_count_);
}

ClassPartition per_class_partition(const LabeledDataset& d) {
  ClassPartition p;
  p.indices.resize(static_cast<std::size_t>(d.class_count()));
  for (std::size_t i = 0; i < d.labels().size(); ++i) {
    p.indices[static_cast<std::size_t>(d.labels()[i])].push_back(i);
  }
  for (std::size_t y = 0; y < p.indices.size(); ++y) {
    require(!p.indices[y].empty(), ErrorKind::empty_class,
            "class " + std::to_string(y) + " has no samples");
  }
  return p;
}

Labels class_major_labels(int class_count, int per_class) {
  Labels labels;
  labels.reserve(static_cast<std::size_t>(class_count * per_class));
  for (int y = 0; y < class_count; ++y) {
    for (int k = 0; k < per_class; ++k) labels.push_back(y);
  }
  return labels;
}

SyntheticDataset::SyntheticDataset(Eigen::MatrixXd features, int class_count, int per_class,
                                   std::string origin, std::uint64_t seed)
    : features_(std::move(features)),
      labels_(class_major_labels(class_count, per_class)),
      class_count_(class_count),
      per_class_(per_class),
      origin_(std::move(origin)),
      seed_(seed) {
  require(class_count_ >= 1 && per_class_ >= 1, ErrorKind::capacity,
          "synthetic set needs at least one class and one row per class");
  require(features_.rows() == static_cast<Eigen::Index>(class_count_) * per_class_,
          ErrorKind::shape,
          "synthetic rows " + std::to_string(features_.rows()) + " != per_class * classes");
  require(features_.allFinite(), ErrorKind::validation, "synthetic features contain NaN or Inf");
}

SyntheticDataset SyntheticDataset::with_features(Eigen::MatrixXd features,
                                                 std::string origin) const {
  return SyntheticDataset(std::move(features), class_count_, per_class_, std::move(origin), seed_);
}

LabeledDataset SyntheticDataset::as_labeled() const {
  return LabeledDataset(features_, labels_, class_count_);
}

// ---- CSV ------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_double(std::string_view s, std::size_t row, std::size_t col) {
  s = trim(s);
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorKind::parse, "row " + std::to_string(row) + ", column " + std::to_string(col) +
                               ": cannot parse '" + std::string(s) + "' as a number");
  }
  return v;
}

int parse_label(std::string_view s, std::size_t row) {
  s = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorKind::parse,
         "row " + std::to_string(row) + ": cannot parse label '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

LabeledDataset parse_dataset_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::empty_dataset, "file is empty");
  const auto header = split_commas(line);
  require(header.size() >= 2, ErrorKind::parse, "header needs at least one feature and 'label'");
  require(trim(header.back()) == "label", ErrorKind::parse, "last header column must be 'label'");
  const std::size_t n = header.size() - 1;

  std::vector<double> values;
  Labels labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != n + 1) {
      fail(ErrorKind::parse, "row " + std::to_string(row) + ": expected " +
                                 std::to_string(n + 1) + " columns, found " +
                                 std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < n; ++j) values.push_back(parse_double(cells[j], row, j));
    const int label = parse_label(cells[n], row);
    require(label >= 0, ErrorKind::label, "row " + std::to_string(row) + ": negative label");
    labels.push_back(label);
    ++row;
  }
  require(!labels.empty(), ErrorKind::empty_dataset, "no data rows after header");

  const std::set<int> distinct(labels.begin(), labels.end());
  const int class_count = *distinct.rbegin() + 1;
  if (static_cast<int>(distinct.size()) != class_count) {
    fail(ErrorKind::label, "labels are not contiguous from 0 (max " +
                               std::to_string(class_count - 1) + ", " +
                               std::to_string(distinct.size()) + " distinct)");
  }
  for (double v : values) {
    require(std::isfinite(v), ErrorKind::validation, "features contain NaN or Inf");
  }
  Eigen::MatrixXd features =
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          values.data(), static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(n));
  return LabeledDataset(std::move(features), std::move(labels), class_count);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset_csv(read_text_file(path));
}

std::string format_dataset_csv(const Eigen::MatrixXd& features, const Labels& labels) {
  std::string out;
  for (Eigen::Index j = 0; j < features.cols(); ++j) out += "f" + std::to_string(j) + ",";
  out += "label\n";
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      out += format_double(features(i, j));
      out += ',';
    }
    out += std::to_string(labels[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& d) {
  write_text_file(path, format_dataset_csv(d.features(), d.labels()));
}

NormalizedDataset normalize_features(const LabeledDataset& d) {
  NormalizationParams params;
  params.minimum = d.features().colwise().minCoeff().transpose();
  params.range = d.features().colwise().maxCoeff().transpose() - params.minimum;
  Eigen::MatrixXd scaled = params.apply(d.features());
  return {d.with_features(std::move(scaled)), std::move(params)};
}

SyntheticDataset init_synthetic(const LabeledDataset& d, int per_class, InitMode mode,
                                std::uint64_t seed) {
  require(per_class >= 1, ErrorKind::capacity, "per_class must be >= 1");
  const auto partition = per_class_partition(d);
  const int C = d.class_count();
  require(static_cast<Eigen::Index>(per_class) * C <= d.size(), ErrorKind::capacity,
          "synthetic set would not be smaller than its source");
  Eigen::MatrixXd features(static_cast<Eigen::Index>(per_class) * C, d.dim());
  Rng rng(seed);
  for (int y = 0; y < C; ++y) {
    const auto& rows = partition.indices[static_cast<std::size_t>(y)];
    const Eigen::Index base = static_cast<Eigen::Index>(y) * per_class;
    if (mode == InitMode::subsample) {
      require(static_cast<std::size_t>(per_class) <= rows.size(), ErrorKind::capacity,
              "class " + std::to_string(y) + " has " + std::to_string(rows.size()) +
                  " samples, cannot draw " + std::to_string(per_class));
      std::vector<std::size_t> picked;
      std::sample(rows.begin(), rows.end(), std::back_inserter(picked),
                  static_cast<std::ptrdiff_t>(per_class), rng);
      for (int k = 0; k < per_class; ++k) {
        features.row(base + k) =
            d.features().row(static_cast<Eigen::Index>(picked[static_cast<std::size_t>(k)]));
      }
    } else {
      const Eigen::RowVectorXd mean = d.class_rows(y).colwise().mean();
      std::normal_distribution<double> noise(0.0, 0.1);
      for (int k = 0; k < per_class; ++k) {
        for (Eigen::Index j = 0; j < d.dim(); ++j) {
          features(base + k, j) = std::clamp(mean(j) + noise(rng), 0.0, 1.0);
        }
      }
    }
  }
  return SyntheticDataset(std::move(features), C, per_class,
                          mode == InitMode::subsample ? "init:subsample" : "init:gaussian_noise",
                          seed);
}

void save_synthetic(const std::filesystem::path& path, const SyntheticDataset& s,
                    const std::optional<NormalizationParams>& normalization) {
  write_text_file(path, format_dataset_csv(s.features(), s.labels()));
  nlohmann::ordered_json meta;
  meta["origin"] = s.origin();
  meta["seed"] = s.seed();
  meta["per_class_size"] = s.per_class();
  meta["class_count"] = s.class_count();
  if (normalization) {
    meta["normalization"] = {{"minimum", to_std_vector(normalization->minimum)},
                             {"range", to_std_vector(normalization->range)}};
  }
  write_text_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

SyntheticDataset load_synthetic(const std::filesystem::path& path) {
  const LabeledDataset d = load_dataset(path);
  const std::filesystem::path meta_path = path.string() + ".meta.json";
  std::string origin = "loaded";
  std::uint64_t seed = 0;
  int per_class = 0;
  int class_count = d.class_count();
  if (std::filesystem::exists(meta_path)) {
    const auto meta = nlohmann::json::parse(read_text_file(meta_path));
    origin = meta.value("origin", origin);
    seed = meta.value("seed", seed);
    per_class = meta.value("per_class_size", 0);
    class_count = meta.value("class_count", class_count);
  }
  if (per_class == 0) {
    require(d.size() % class_count == 0, ErrorKind::label,
            "synthetic rows are not a multiple of the class count");
    per_class = static_cast<int>(d.size() / class_count);
  }
  require(d.labels() == class_major_labels(class_count, per_class), ErrorKind::label,
          "synthetic labels must be class-major with equal class sizes");
  return SyntheticDataset(d.features(), class_count, per_class, origin, seed);
}

TrainTestSplit stratified_split(const LabeledDataset& d, double train_fraction,
                                std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::config,
          "train fraction must lie in (0, 1)");
  const auto partition = per_class_partition(d);
  Rng rng(seed);
  std::vector<std::size_t> train, test;
  for (auto rows : partition.indices) {
    std::shuffle(rows.begin(), rows.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * rows.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size());
    train.insert(train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  require(!test.empty(), ErrorKind::capacity, "split leaves no evaluation rows");
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {d.subset(train), d.subset(test)};
}

}  // namespace dcond
