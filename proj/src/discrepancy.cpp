#include "dcond/discrepancy.hpp"

#include "dcond/error.hpp"
#include "dcond/rng.hpp"
#include "dcond/transport.hpp"
#include "dcond/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(ModelProvenance p) {
  switch (p) {
    case ModelProvenance::random_init: return "random_init";
    case ModelProvenance::pretrained: return "pretrained";
    case ModelProvenance::trajectory_snapshots: return "trajectory_snapshots";
  }
  return "?";
}

void validate(const ModelBatch& batch) {
  require(!batch.models.empty(), ErrorKind::config, "model batch is empty");
  for (const auto& m : batch.models)
    require(m.input_dim() == batch.models.front().input_dim(), ErrorKind::shape,
            "model batch members differ in input dimension");
}

ModelBatch random_model_batch(const std::vector<int>& widths, Activation act, int count,
                              std::uint64_t seed) {
  require(count >= 1, ErrorKind::config, "model batch needs at least one model");
  ModelBatch b;
  for (int k = 0; k < count; ++k)
    b.models.push_back(Mlp::init(widths, act, derive_seed(seed, static_cast<std::uint64_t>(k))));
  return b;
}

namespace {

void check_pair(const LabeledDataset& t, const LabeledDataset& s) {
  require(t.class_count() == s.class_count(), ErrorKind::label,
          "T has " + std::to_string(t.class_count()) + " classes but S has " +
              std::to_string(s.class_count()));
  require(t.dim() == s.dim(), ErrorKind::shape, "T and S differ in feature dimension");
}

// Row blocks of each class; raises a label error when S lacks a class.
std::vector<MatrixXd> class_blocks(const LabeledDataset& d, const char* which) {
  std::vector<MatrixXd> out;
  for (int y = 0; y < d.class_count(); ++y) {
    out.push_back(d.class_rows(y));
    require(out.back().rows() > 0, ErrorKind::label,
            std::string(which) + " has no samples of class " + std::to_string(y));
  }
  return out;
}

VectorXd column_mean(const MatrixXd& x) { return x.colwise().mean().transpose(); }

VectorXd column_variance(const MatrixXd& x) {
  MatrixXd centered = x.rowwise() - x.colwise().mean();
  return centered.array().square().colwise().mean().transpose();
}

}  // namespace

double ipm_feature_stat(const ModelBatch& batch, const LabeledDataset& t, const LabeledDataset& s,
                        bool layerwise) {
  validate(batch);
  check_pair(t, s);
  auto tb = class_blocks(t, "T");
  auto sb = class_blocks(s, "S");
  double best = 0.0;
  for (const auto& m : batch.models) {
    double total = 0.0;
    for (std::size_t y = 0; y < tb.size(); ++y) {
      if (layerwise) {
        auto ft = m.forward(tb[y]).features;
        auto fs = m.forward(sb[y]).features;
        for (std::size_t l = 0; l < ft.size(); ++l)
          total += (column_mean(ft[l]) - column_mean(fs[l])).squaredNorm();
      } else {
        total += (column_mean(m.embedding(tb[y])) - column_mean(m.embedding(sb[y]))).squaredNorm();
      }
    }
    best = std::max(best, total);
  }
  return best;
}

double gradient_discrepancy(const ModelBatch& batch, const LabeledDataset& t,
                            const LabeledDataset& s, GradientMode mode, Loss loss) {
  validate(batch);
  check_pair(t, s);
  auto tb = class_blocks(t, "T");
  auto sb = class_blocks(s, "S");
  double best = 0.0;
  for (const auto& m : batch.models) {
    double total = 0.0;
    VectorXd sum_t = VectorXd::Zero(m.param_count()), sum_s = sum_t;
    for (std::size_t y = 0; y < tb.size(); ++y) {
      Labels lt(static_cast<std::size_t>(tb[y].rows()), static_cast<int>(y));
      Labels ls(static_cast<std::size_t>(sb[y].rows()), static_cast<int>(y));
      VectorXd gt = m.backward(tb[y], lt, loss).params;
      VectorXd gs = m.backward(sb[y], ls, loss).params;
      if (mode == GradientMode::per_class) {
        total += (gt - gs).squaredNorm();
      } else {
        sum_t += gt;
        sum_s += gs;
      }
    }
    if (mode == GradientMode::contrastive) total = (sum_t - sum_s).squaredNorm();
    best = std::max(best, total);
  }
  return best;
}

double moment_discrepancy(const ModelBatch& batch, const LabeledDataset& t, const LabeledDataset& s) {
  validate(batch);
  check_pair(t, s);
  auto tb = class_blocks(t, "T");
  auto sb = class_blocks(s, "S");
  double best = 0.0;
  for (const auto& m : batch.models) {
    double total = 0.0;
    for (std::size_t y = 0; y < tb.size(); ++y) {
      MatrixXd ht = m.embedding(tb[y]), hs = m.embedding(sb[y]);
      total += (column_mean(ht) - column_mean(hs)).squaredNorm() +
               (column_variance(ht) - column_variance(hs)).squaredNorm();
    }
    best = std::max(best, total);
  }
  return best;
}

double hausdorff_distance(const MatrixXd& t, const MatrixXd& s) {
  require(t.rows() >= 1 && s.rows() >= 1, ErrorKind::domain, "Hausdorff distance needs two nonempty sets");
  MatrixXd d = pairwise_distances(t, s);
  return std::max(d.rowwise().minCoeff().maxCoeff(), d.colwise().minCoeff().maxCoeff());
}

MatrixXd sample_frequencies(Index dim, int count, std::uint64_t seed) {
  require(count >= 1, ErrorKind::domain, "need at least one frequency");
  Rng rng(seed);
  std::normal_distribution<double> normal;
  MatrixXd f(count, dim);
  for (Index i = 0; i < f.rows(); ++i)
    for (Index j = 0; j < f.cols(); ++j) f(i, j) = normal(rng);
  return f;
}

namespace {

// Per-frequency modulus |F_T(t) - F_S(t)|.
VectorXd characteristic_gaps(const MatrixXd& t, const MatrixXd& s, const MatrixXd& freqs) {
  MatrixXd pt = t * freqs.transpose();
  MatrixXd ps = s * freqs.transpose();
  VectorXd re = pt.array().cos().colwise().mean().transpose() -
                ps.array().cos().colwise().mean().transpose();
  VectorXd im = pt.array().sin().colwise().mean().transpose() -
                ps.array().sin().colwise().mean().transpose();
  return (re.array().square() + im.array().square()).sqrt().matrix();
}

}  // namespace

double characteristic_discrepancy(const MatrixXd& t, const MatrixXd& s, const MatrixXd& freqs) {
  require(freqs.rows() >= 1, ErrorKind::domain, "need at least one frequency");
  require(t.rows() >= 1 && s.rows() >= 1, ErrorKind::domain, "CD needs two nonempty sets");
  require(t.cols() == s.cols() && freqs.cols() == t.cols(), ErrorKind::shape,
          "frequency dimension does not match the data");
  return characteristic_gaps(t, s, freqs).maxCoeff();
}

double characteristic_discrepancy(const MatrixXd& t, const MatrixXd& s, int count,
                                  std::uint64_t seed) {
  return characteristic_discrepancy(t, s, sample_frequencies(t.cols(), count, seed));
}

double max_loss_gap(const ModelBatch& h, const LabeledDataset& t, const LabeledDataset& s, Loss loss) {
  validate(h);
  double gap = 0.0;
  for (const auto& m : h.models)
    gap = std::max(gap, std::abs(mean_loss(m, t.features(), t.labels(), loss) -
                                 mean_loss(m, s.features(), s.labels(), loss)));
  return gap;
}

std::size_t empirical_risk_minimizer(const ModelBatch& h, const LabeledDataset& d, Loss loss) {
  validate(h);
  std::size_t best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < h.models.size(); ++k) {
    const double l = mean_loss(h.models[k], d.features(), d.labels(), loss);
    if (l < best_loss) {
      best_loss = l;
      best = k;
    }
  }
  return best;
}

GeneralizationDiscrepancy generalization_discrepancy_finite(const ModelBatch& h,
                                                            const LabeledDataset& t,
                                                            const LabeledDataset& s, Loss loss,
                                                            const MatrixXd& eval_points,
                                                            bool want_pd) {
  validate(h);
  check_pair(t, s);
  GeneralizationDiscrepancy r;
  r.selected_on_t = empirical_risk_minimizer(h, t, loss);
  r.selected_on_s = empirical_risk_minimizer(h, s, loss);
  const Mlp& mt = h.models[r.selected_on_t];
  const Mlp& ms = h.models[r.selected_on_s];
  r.gd = std::abs(mean_loss(ms, t.features(), t.labels(), loss) -
                  mean_loss(mt, t.features(), t.labels(), loss));
  if (eval_points.rows() > 0)
    r.vd = (mt.logits(eval_points) - ms.logits(eval_points)).cwiseAbs().maxCoeff();
  if (want_pd) {
    for (const auto& m : h.models)
      require(m.same_architecture(h.models.front()), ErrorKind::architecture,
              "parameter discrepancy needs a single architecture across the batch");
    r.pd = (mt.flat_params() - ms.flat_params()).norm();
  }
  return r;
}

MatrixXd value_evaluation_sample(const MatrixXd& t, int uniform_count, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd out(t.rows() + uniform_count, t.cols());
  out.topRows(t.rows()) = t;
  for (Index i = t.rows(); i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = unit(rng);
  return out;
}

HierarchyCheck make_check(std::string name, double lhs, double rhs) {
  return HierarchyCheck{std::move(name), lhs, rhs, lhs <= rhs + 1e-9};
}

std::string DiscrepancyReport::to_json() const {
  nlohmann::ordered_json j;
  j["values"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values) j["values"][k] = v;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"satisfied", c.satisfied}});
  j["hyperparameters"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : hyperparameters) j["hyperparameters"][k] = v;
  return j.dump(2) + "\n";
}

DiscrepancyReport DiscrepancyReport::from_json(const std::string& text) {
  DiscrepancyReport r;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& [k, v] : j.at("values").items()) r.values[k] = v.get<double>();
    for (const auto& c : j.at("checks"))
      r.checks.push_back({c.at("name").get<std::string>(), c.at("lhs").get<double>(),
                          c.at("rhs").get<double>(), c.at("satisfied").get<bool>()});
    for (const auto& [k, v] : j.at("hyperparameters").items()) r.hyperparameters[k] = v.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("discrepancy report: ") + e.what());
  }
  return r;
}

namespace {

bool wants(const std::vector<std::string>& metrics, const std::string& name) {
  return metrics.empty() || std::find(metrics.begin(), metrics.end(), name) != metrics.end();
}

void add_point_set_values(DiscrepancyReport& r, const std::vector<MatrixXd>& tb,
                          const std::vector<MatrixXd>& sb, const MatrixXd& t_all,
                          const std::vector<std::string>& metrics, const HierarchyOptions& o) {
  for (const auto& m : metrics)
    require(m == "mmd" || m == "w1" || m == "hausdorff" || m == "cd", ErrorKind::config,
            "unknown discrepancy metric '" + m + "'");
  const double classes = static_cast<double>(tb.size());
  if (wants(metrics, "mmd")) {
    KernelSpec k = o.kernel ? *o.kernel : KernelSpec::gaussian(median_heuristic_scale(t_all));
    double total = 0.0;
    for (std::size_t y = 0; y < tb.size(); ++y) total += std::max(0.0, mmd_squared(k, tb[y], sb[y]));
    r.values["mmd"] = total / classes;
    r.hyperparameters["mmd.kernel"] = to_string(k.family);
    r.hyperparameters["mmd.scale"] = format_double(k.scale);
    if (k.family == KernelFamily::gamma_exponential) r.hyperparameters["mmd.gamma"] = format_double(k.gamma);
    if (k.family == KernelFamily::random_feature) {
      r.hyperparameters["mmd.feature_dim"] = std::to_string(k.feature_dim);
      r.hyperparameters["mmd.seed"] = std::to_string(k.seed);
    }
    r.hyperparameters["mmd.estimator"] = "biased_v_statistic";
  }
  if (wants(metrics, "w1")) {
    double total = 0.0;
    for (std::size_t y = 0; y < tb.size(); ++y) total += wasserstein1(tb[y], sb[y]);
    r.values["w1"] = total / classes;
    r.hyperparameters["w1.ground_metric"] = "euclidean";
  }
  if (wants(metrics, "hausdorff")) {
    double worst = 0.0;
    for (std::size_t y = 0; y < tb.size(); ++y) worst = std::max(worst, hausdorff_distance(tb[y], sb[y]));
    r.values["hausdorff"] = worst;
  }
  if (wants(metrics, "cd")) {
    MatrixXd freqs = sample_frequencies(t_all.cols(), o.cd_frequencies, o.cd_seed);
    double worst = 0.0;
    for (std::size_t y = 0; y < tb.size(); ++y)
      worst = std::max(worst, characteristic_discrepancy(tb[y], sb[y], freqs));
    r.values["cd"] = worst;
    r.hyperparameters["cd.frequencies"] = std::to_string(o.cd_frequencies);
    r.hyperparameters["cd.seed"] = std::to_string(o.cd_seed);
  }
  r.hyperparameters["class_reduction"] = "mmd,w1: mean over classes; hausdorff,cd: max over classes";
}

}  // namespace

DiscrepancyReport point_set_report(const LabeledDataset& t, const LabeledDataset& s,
                                   const std::vector<std::string>& metrics,
                                   const HierarchyOptions& options) {
  check_pair(t, s);
  DiscrepancyReport r;
  add_point_set_values(r, class_blocks(t, "T"), class_blocks(s, "S"), t.features(), metrics, options);
  return r;
}

DiscrepancyReport hierarchy_report(const LabeledDataset& t, const LabeledDataset& s,
                                   const ModelBatch& h, const HierarchyOptions& o) {
  validate(h);
  check_pair(t, s);
  auto tb = class_blocks(t, "T");
  auto sb = class_blocks(s, "S");
  DiscrepancyReport r;
  add_point_set_values(r, tb, sb, t.features(), {}, o);
  r.values["dd_feature"] = ipm_feature_stat(h, t, s, false);
  r.values["dd_gradient"] = gradient_discrepancy(h, t, s, GradientMode::per_class, o.loss);
  r.values["dd_moment"] = moment_discrepancy(h, t, s);

  bool homogeneous = true;
  for (const auto& m : h.models) homogeneous = homogeneous && m.same_architecture(h.models.front());
  auto g = generalization_discrepancy_finite(h, t, s, o.loss,
                                             value_evaluation_sample(t.features(), o.vd_uniform, o.vd_seed),
                                             o.parameter_discrepancy && homogeneous);
  r.values["gd"] = g.gd;
  r.values["vd"] = g.vd;
  if (g.pd) r.values["pd"] = *g.pd;

  r.checks.push_back(make_check("gd <= 2*max_h|L(h,T)-L(h,S)|", g.gd, 2.0 * max_loss_gap(h, t, s, o.loss)));

  // The test class holds cos(<x,t> - phi) for the CD frequencies and every
  // embedding coordinate of the batch, so its IPM dominates CD.
  MatrixXd freqs = sample_frequencies(t.dim(), o.cd_frequencies, o.cd_seed);
  double ipm = 0.0;
  for (std::size_t y = 0; y < tb.size(); ++y) {
    ipm = std::max(ipm, characteristic_gaps(tb[y], sb[y], freqs).maxCoeff());
    for (const auto& m : h.models)
      ipm = std::max(ipm, (column_mean(m.embedding(tb[y])) - column_mean(m.embedding(sb[y])))
                              .cwiseAbs()
                              .maxCoeff());
  }
  r.checks.push_back(make_check("cd <= ipm(frequency and feature test functions)", r.values["cd"], ipm));

  r.hyperparameters["loss"] = to_string(o.loss);
  r.hyperparameters["model_batch.size"] = std::to_string(h.models.size());
  r.hyperparameters["model_batch.provenance"] = to_string(h.provenance);
  r.hyperparameters["vd.uniform_points"] = std::to_string(o.vd_uniform);
  r.hyperparameters["vd.seed"] = std::to_string(o.vd_seed);
  r.hyperparameters["argmin_tie_break"] = "first_index";
  return r;
}

}  // namespace dcond
