#include "dcond/condense.hpp"

#include "dcond/augment.hpp"
#include "dcond/bilevel.hpp"
#include "dcond/error.hpp"
#include "dcond/krr.hpp"
#include "dcond/matching.hpp"
#include "dcond/regularizers.hpp"
#include "dcond/rng.hpp"
#include "dcond/util.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string CondenseLog::csv() const {
  std::ostringstream out;
  out << "step,objective,method_loss";
  for (const auto& n : regularizer_names) out << ",reg_" << n;
  out << ",grad_norm\n";
  for (const auto& r : steps) {
    out << r.step << ',' << format_double(r.objective) << ',' << format_double(r.method_loss);
    for (double v : r.regularizers) out << ',' << format_double(v);
    out << ',' << format_double(r.grad_norm) << '\n';
  }
  return out.str();
}

double CondenseLog::nonincreasing_fraction() const {
  if (steps.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t i = 1; i < steps.size(); ++i) ok += steps[i].objective <= steps[i - 1].objective ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(steps.size() - 1);
}

KernelSpec resolve_kernel(const KernelConfig& k, const MatrixXd& t, const std::vector<Mlp>& models) {
  auto scale = [&] { return k.scale ? *k.scale : median_heuristic_scale(t); };
  if (k.family == "gaussian") return KernelSpec::gaussian(scale());
  switch (parse_kernel_family(k.family)) {
    case KernelFamily::gamma_exponential: return KernelSpec::gamma_exponential(scale(), k.gamma);
    case KernelFamily::random_feature: return KernelSpec::random_features(scale(), k.feature_dim, k.seed);
    case KernelFamily::empirical_ntk: return KernelSpec::ntk(models);
    case KernelFamily::nfk: return KernelSpec::nfk(models);
    case KernelFamily::pullback: break;
  }
  fail(ErrorKind::config, "kernel family " + k.family + " cannot be built from a method config");
}

RegimeSetup identity_regime(const MatrixXd& t) {
  const Index n = t.cols();
  AffineMap id{MatrixXd::Identity(n, n), VectorXd::Zero(n)};
  return RegimeSetup{Regime::input_input, t, id, id, true};
}

namespace {

class Optimizer {
 public:
  Optimizer(std::string kind, double lr, Index n)
      : kind_(std::move(kind)), lr_(lr), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

  void step(VectorXd& x, const VectorXd& g) {
    if (kind_ == "sgd") {
      x -= lr_ * g;
      return;
    }
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * g;
    v_ = b2_ * v_ + (1.0 - b2_) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
    x.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  std::string kind_;
  double lr_;
  VectorXd m_, v_;
  int t_ = 0;
  static constexpr double b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
};

VectorXd flat(const MatrixXd& x) { return Eigen::Map<const VectorXd>(x.data(), x.size()); }
MatrixXd shaped(const VectorXd& v, Index rows, Index cols) { return Eigen::Map<const MatrixXd>(v.data(), rows, cols); }

MatchMethod match_method(Method m) {
  switch (m) {
    case Method::dm: return MatchMethod::dm;
    case Method::gm: return MatchMethod::gm;
    case Method::mmd: return MatchMethod::mmd;
    case Method::moment: return MatchMethod::moment;
    case Method::sam: return MatchMethod::sam;
    default: break;
  }
  fail(ErrorKind::config, "not a matching method: " + to_string(m));
}

bool needs_models(RegularizerId id) { return id != RegularizerId::rep && id != RegularizerId::div && id != RegularizerId::proj; }

class Run {
 public:
  Run(const MethodConfig& cfg, const LabeledDataset& t, const SyntheticDataset& s0, RegimeSetup setup)
      : cfg_(cfg),
        s0_(s0),
        setup_(std::move(setup)),
        tm_(setup_.matched_t, t.labels(), t.class_count()),
        labels_(s0.labels()),
        noise_rng_(derive_seed(cfg.seed, "privacy")),
        rat_rng_(derive_seed(cfg.seed, "truncation")) {
    model_input_ = static_cast<int>(tm_.dim());
    if (cfg_.variants.multiform) model_input_ *= (*cfg_.variants.multiform) * (*cfg_.variants.multiform) + 1;
    if (cfg_.image_shape && (cfg_.variants.multiform || cfg_.variants.channel_multiform || cfg_.variants.siamese))
      require(cfg_.image_shape->size() == tm_.dim(), ErrorKind::config,
              "image_shape does not match the matched feature width " + std::to_string(tm_.dim()));
    for (const auto& r : cfg_.regularizers) {
      log_.regularizer_names.push_back(to_string(r.id));
      if (needs_models(r.id))
        require(model_input_ == tm_.dim(), ErrorKind::config,
                "regularizer " + to_string(r.id) + " cannot share models with the multiform variant");
    }
    if (cfg_.variants.dp_grad) log_.privacy = {*cfg_.variants.dp_grad, 1.0, 0};
    if (cfg_.variants.dp_merf) log_.privacy = {*cfg_.variants.dp_merf, 0.0, 0};
  }

  CondenseResult go() {
    MatrixXd vars = setup_.initial_variables(s0_.features());
    const Index rows = vars.rows(), cols = vars.cols();
    const bool unrolled = cfg_.method == Method::bptt;
    VectorXd x = flat(vars);
    if (unrolled) {
      x.conservativeResize(x.size() + 1);
      x(x.size() - 1) = cfg_.inner_lr;
    }
    Optimizer opt(cfg_.optimizer, cfg_.learning_rate, x.size());
    for (int step = 0; step < cfg_.steps; ++step) {
      vars = shaped(x.head(rows * cols), rows, cols);
      eta_ = unrolled ? x(x.size() - 1) : 0.0;
      prepare(step);
      const MatrixXd sm = setup_.to_match.apply(vars);
      StepRecord rec;
      rec.step = step;
      MatrixXd g_match = objective(sm, step, rec);
      const MatrixXd g_vars = setup_.to_match.pullback(g_match);
      VectorXd g(x.size());
      g.head(rows * cols) = flat(g_vars);
      if (unrolled) g(g.size() - 1) = grad_eta_;
      rec.grad_norm = g.norm();
      require(std::isfinite(rec.objective) && g.allFinite(), ErrorKind::divergence,
              "objective diverged at step " + std::to_string(step));
      log_.steps.push_back(rec);
      opt.step(x, g);
      if (cfg_.clip && setup_.clip_variables) x.head(rows * cols) = x.head(rows * cols).cwiseMax(0.0).cwiseMin(1.0);
      if (unrolled) x(x.size() - 1) = std::clamp(x(x.size() - 1), 1e-4, 10.0);
    }
    vars = shaped(x.head(rows * cols), rows, cols);
    CondenseResult out{s0_.with_features(setup_.to_input.apply(vars), "condensed:" + to_string(cfg_.method)),
                       vars, log_, std::nullopt, {}};
    if (unrolled) out.inner_lr = x(x.size() - 1);
    return out;
  }

 private:
  std::vector<Mlp> make_models(int round) const {
    std::vector<int> widths{model_input_};
    widths.insert(widths.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    widths.push_back(tm_.class_count());
    const std::uint64_t base = derive_seed(derive_seed(cfg_.seed, "models"), static_cast<std::uint64_t>(round));
    std::vector<Mlp> out;
    for (int i = 0; i < cfg_.ensemble; ++i) {
      Mlp m = Mlp::init(widths, cfg_.activation, derive_seed(base, static_cast<std::uint64_t>(i)));
      if (cfg_.provenance == ModelProvenance::pretrained && cfg_.pretrain_epochs > 0) {
        TrainConfig pc{cfg_.expert.learning_rate, cfg_.pretrain_epochs, cfg_.expert.batch_size, Loss::cross_entropy,
                       derive_seed(base, "pretrain")};
        MatrixXd tx = tm_.features();
        if (cfg_.variants.multiform) tx = formed(tx);
        m = sgd_train(m, tx, tm_.labels(), pc).model;
      }
      out.push_back(std::move(m));
    }
    return out;
  }

  const ImageShape& shape() const { return *cfg_.image_shape; }

  MatrixXd formed(const MatrixXd& x) const {
    return multi_formation(ImageBatch::from_rows(x, shape().channels, shape().height, shape().width),
                           *cfg_.variants.multiform)
        .to_rows();
  }

  bool matching_uses_models() const {
    if (!is_matching(cfg_.method)) return false;
    const bool feature_route = cfg_.method == Method::mmd ? kernel_family_is("random_feature") || cfg_.variants.dp_merf
                                                          : cfg_.variants.dp_merf.has_value();
    if (feature_route) return false;
    if (cfg_.method == Method::mmd) return kernel_family_is("ntk") || kernel_family_is("nfk");
    return true;
  }

  bool kernel_family_is(const std::string& f) const {
    if (cfg_.kernel.family == f) return true;
    if (f == "ntk") return cfg_.kernel.family == "empirical_ntk";
    return false;
  }

  KernelSpec kernel(const MatrixXd& t) {
    KernelConfig k = cfg_.kernel;
    if (!k.scale && k.family != "ntk" && k.family != "empirical_ntk" && k.family != "nfk") {
      if (!median_scale_) median_scale_ = median_heuristic_scale(t);
      k.scale = *median_scale_;
    }
    return resolve_kernel(k, t, models_);
  }

  void prepare(int step) {
    bool rebuild = step == 0;
    if (step % cfg_.refresh == 0) {
      models_ = make_models(step / cfg_.refresh);
      ++log_.refreshes;
      if (matching_uses_models() || cfg_.variants.channel_multiform) rebuild = true;
      round_ = step / cfg_.refresh;
      if (cfg_.method == Method::bptt) {
        BpttOptions o;
        o.inner_steps = cfg_.variants.rat_truncation ? *cfg_.variants.rat_truncation : cfg_.inner_steps;
        o.robust = cfg_.variants.robust_outer;
        o.curvature = cfg_.variants.curvdc;
        o.power_iters = cfg_.power_iters;
        o.power_seed = derive_seed(cfg_.seed, "curvdc");
        o.fd_step = cfg_.fd_step;
        bptt_.emplace(models_.front(), tm_, labels_, o);
      }
      if (cfg_.method == Method::trajectory) {
        TrainConfig ec = cfg_.expert;
        ec.loss = Loss::cross_entropy;
        trajectory_.emplace(models_.front(), tm_, ec);
      }
      if (cfg_.method == Method::krr) krr_kernel_ = kernel(tm_.features());
    }
    if (!is_matching(cfg_.method)) return;
    const auto& v = cfg_.variants;
    if (v.kmeans_proxy && step % v.kmeans_proxy->period == 0) {
      proxy_.emplace(kmeans_proxy(step));
      rebuild = true;
    }
    if (v.siamese) {
      siamese_ = SiameseParams::draw(*v.siamese, shape().height, shape().width,
                                     derive_seed(derive_seed(cfg_.seed, "siamese"), static_cast<std::uint64_t>(step)));
      rebuild = true;
    }
    if (rebuild) build_matching();
  }

  LabeledDataset kmeans_proxy(int step) const {
    const int k = cfg_.variants.kmeans_proxy->k;
    MatrixXd centers(0, tm_.dim());
    Labels labels;
    for (int y = 0; y < tm_.class_count(); ++y) {
      MatrixXd ty = tm_.class_rows(y);
      if (ty.rows() == 0) continue;
      const int ky = std::min<int>(k, static_cast<int>(ty.rows()));
      auto km = kmeans_coreset(ty, ky, cfg_.kmeans_iters,
                               derive_seed(derive_seed(cfg_.seed, "proxy"), static_cast<std::uint64_t>(step * 1009 + y)));
      centers.conservativeResize(centers.rows() + ky, Eigen::NoChange);
      centers.bottomRows(ky) = km.centers;
      labels.insert(labels.end(), static_cast<std::size_t>(ky), y);
    }
    return LabeledDataset(centers, labels, tm_.class_count());
  }

  void build_matching() {
    const LabeledDataset& base = proxy_ ? *proxy_ : tm_;
    const auto& v = cfg_.variants;
    MatrixXd tx = base.features();
    Labels tl = base.labels();
    if (v.multiform) tx = formed(tx);
    if (v.channel_multiform) {
      const auto seed = derive_seed(derive_seed(cfg_.seed, "channel"), static_cast<std::uint64_t>(round_));
      auto tb = ImageBatch::from_rows(tx, shape().channels, shape().height, shape().width);
      tx = channel_multi_formation(tb, draw_channel_mixing(tb.batch(), shape().channels, derive_seed(seed, "real"))).to_rows();
      Labels rep;
      for (int c = 0; c < 4; ++c) rep.insert(rep.end(), tl.begin(), tl.end());
      tl = rep;
      mixing_ = draw_channel_mixing(static_cast<int>(labels_.size()), shape().channels, derive_seed(seed, "synthetic"));
    }
    if (v.siamese)
      tx = apply_siamese(ImageBatch::from_rows(tx, shape().channels, shape().height, shape().width), *siamese_).to_rows();

    MatchOptions o;
    o.method = match_method(cfg_.method);
    o.gradient_mode = v.contrastive ? GradientMode::contrastive : GradientMode::per_class;
    o.feature_embedding = !matching_uses_models() && (v.dp_merf || cfg_.method == Method::mmd) &&
                          (v.dp_merf || kernel_family_is("random_feature"));
    if (cfg_.method == Method::mmd || o.feature_embedding) {
      o.kernel = kernel(tx);
      if (o.feature_embedding && o.kernel.family != KernelFamily::random_feature)
        o.kernel = KernelSpec::random_features(o.kernel.scale, cfg_.kernel.feature_dim, cfg_.kernel.seed);
    }
    o.merf_sigma = v.dp_merf;
    o.grad_sigma = v.dp_grad;
    o.curvature_rho = v.curvature;
    o.power_iters = cfg_.power_iters;
    o.curvature_seed = derive_seed(cfg_.seed, "curvature");
    matching_.emplace(o, matching_uses_models() ? models_ : std::vector<Mlp>{}, LabeledDataset(tx, tl, base.class_count()),
                      &noise_rng_);
    log_.privacy.invocations += matching_->mechanism_invocations();
  }

  MatrixXd matching_grad(const MatrixXd& sm, double& value) {
    const auto& v = cfg_.variants;
    if (v.multiform) {
      MatchValue r = matching_->evaluate(formed(sm), labels_);
      value = r.value;
      const int r2 = *v.multiform;
      return multi_formation_adjoint(
                 ImageBatch::from_rows(r.grad, shape().channels * (r2 * r2 + 1), shape().height, shape().width),
                 shape().channels, r2)
          .to_rows();
    }
    if (v.channel_multiform) {
      auto sb = ImageBatch::from_rows(sm, shape().channels, shape().height, shape().width);
      Labels rep;
      for (int c = 0; c < 4; ++c) rep.insert(rep.end(), labels_.begin(), labels_.end());
      MatchValue r = matching_->evaluate(channel_multi_formation(sb, mixing_).to_rows(), rep);
      value = r.value;
      auto g = ImageBatch::from_rows(r.grad, shape().channels, shape().height, shape().width);
      return channel_multi_formation_vjp(sb, mixing_, g).to_rows();
    }
    if (v.siamese) {
      auto sb = ImageBatch::from_rows(sm, shape().channels, shape().height, shape().width);
      MatchValue r = matching_->evaluate(apply_siamese(sb, *siamese_).to_rows(), labels_);
      value = r.value;
      auto g = ImageBatch::from_rows(r.grad, shape().channels, shape().height, shape().width);
      return siamese_vjp(sb, *siamese_, g).to_rows();
    }
    MatchValue r = matching_->evaluate(sm, labels_);
    value = r.value;
    return r.grad;
  }

  MatrixXd objective(const MatrixXd& sm, int step, StepRecord& rec) {
    MatrixXd grad;
    double value = 0.0;
    grad_eta_ = 0.0;
    std::optional<VectorXd> student_theta;
    switch (cfg_.method) {
      case Method::dm:
      case Method::gm:
      case Method::mmd:
      case Method::moment:
      case Method::sam: grad = matching_grad(sm, value); break;
      case Method::krr: {
        MatrixXd ys = one_hot(labels_, tm_.class_count()), yt = one_hot(tm_.labels(), tm_.class_count());
        MatrixXd tx = tm_.features();
        if (cfg_.variants.ridge_robust)
          tx = krr_adversarial_real(*krr_kernel_, sm, ys, tx, yt, cfg_.ridge, cfg_.variants.ridge_robust->epsilon,
                                    cfg_.variants.ridge_robust->steps);
        KrrLoss l = krr_loss(*krr_kernel_, sm, ys, tx, yt, cfg_.ridge);
        value = l.value;
        grad = l.grad_s;
        break;
      }
      case Method::bptt: {
        int prefix = 0;
        if (cfg_.variants.rat_truncation)
          prefix = std::uniform_int_distribution<int>(0, cfg_.inner_steps - *cfg_.variants.rat_truncation)(rat_rng_);
        BpttResult r = bptt_->evaluate(sm, eta_, prefix);
        value = r.value;
        grad = r.grad_s;
        grad_eta_ = r.grad_eta;
        break;
      }
      case Method::trajectory: {
        value = trajectory_->value(sm, labels_);
        grad = trajectory_->gradient(sm, labels_, cfg_.fd_step);
        student_theta = trajectory_->student(sm, labels_).snapshots.back();
        break;
      }
      case Method::cig_ridge: {
        CigResult r = cig_ridge(sm, one_hot(labels_, tm_.class_count()), tm_.features(),
                                one_hot(tm_.labels(), tm_.class_count()), cfg_.ridge);
        value = r.value;
        grad = r.grad;
        break;
      }
      case Method::kcenter:
      case Method::kmeans: fail(ErrorKind::config, "coreset methods have no outer loop");
    }
    (void)step;
    rec.method_loss = value;
    rec.objective = value;
    if (cfg_.regularizers.empty()) return grad;
    RegularizerContext ctx;
    ctx.models = &models_;
    ctx.s = &sm;
    ctx.s_labels = &labels_;
    ctx.class_count = tm_.class_count();
    ctx.t = &tm_;
    if (trajectory_) ctx.trajectory = &trajectory_->expert();
    if (student_theta) ctx.theta = &*student_theta;
    for (const auto& term : cfg_.regularizers) {
      const double r = regularizer_eval(term, ctx);
      rec.regularizers.push_back(r);
      rec.objective += term.weight * r;
      if (term.weight != 0.0) grad += term.weight * regularizer_gradient(term, ctx);
    }
    return grad;
  }

  const MethodConfig& cfg_;
  const SyntheticDataset& s0_;
  RegimeSetup setup_;
  LabeledDataset tm_;
  Labels labels_;
  Rng noise_rng_;
  Rng rat_rng_;
  int model_input_ = 0;
  int round_ = 0;
  double eta_ = 0.0;
  double grad_eta_ = 0.0;
  std::vector<Mlp> models_;
  std::optional<double> median_scale_;
  std::optional<KernelSpec> krr_kernel_;
  std::optional<MatchingObjective> matching_;
  std::optional<BpttObjective> bptt_;
  std::optional<TrajectoryObjective> trajectory_;
  std::optional<LabeledDataset> proxy_;
  std::optional<SiameseParams> siamese_;
  ChannelMixing mixing_;
  CondenseLog log_;
};

CondenseResult run_coreset(const MethodConfig& cfg, const LabeledDataset& t, const SyntheticDataset& s0) {
  const int m = s0.per_class();
  MatrixXd out(s0.size(), t.dim());
  CondenseResult r{s0, MatrixXd(), {}, std::nullopt, {}};
  std::vector<std::vector<double>> inertia;
  double radius = 0.0;
  for (int y = 0; y < t.class_count(); ++y) {
    MatrixXd ty = t.class_rows(y);
    require(ty.rows() > 0, ErrorKind::empty_class, "class " + std::to_string(y) + " has no real samples");
    if (cfg.method == Method::kcenter) {
      CoverResult c = kcenter_covering(ty, m);
      auto rows = c.indices;
      std::sort(rows.begin(), rows.end());  // keep real row order inside a class
      for (int k = 0; k < m; ++k) out.row(static_cast<Index>(y) * m + k) = ty.row(static_cast<Index>(rows[k]));
      radius = std::max(radius, c.radius);
      r.covers.push_back(std::move(c));
    } else {
      auto km = kmeans_coreset(ty, m, cfg.kmeans_iters, derive_seed(derive_seed(cfg.seed, "kmeans"), static_cast<std::uint64_t>(y)));
      out.middleRows(static_cast<Index>(y) * m, m) = km.centers;
      inertia.push_back(km.inertia);
    }
  }
  if (cfg.method == Method::kcenter) {
    StepRecord rec;
    rec.objective = rec.method_loss = radius;
    r.log.steps.push_back(rec);
  } else {
    for (std::size_t it = 0; it < inertia.front().size(); ++it) {
      StepRecord rec;
      rec.step = static_cast<int>(it);
      for (const auto& h : inertia) rec.objective += h[it];
      rec.method_loss = rec.objective;
      r.log.steps.push_back(rec);
    }
  }
  r.s = s0.with_features(out, "condensed:" + to_string(cfg.method));
  r.variables = out;
  return r;
}

}  // namespace

CondenseResult condense(const MethodConfig& cfg, const LabeledDataset& t, const SyntheticDataset& s0,
                        const std::optional<RegimeSetup>& regime) {
  validate(cfg);
  require(s0.class_count() == t.class_count(), ErrorKind::config, "synthetic and real class counts differ");
  require(s0.dim() == t.dim(), ErrorKind::shape, "synthetic and real feature widths differ");
  for (int y = 0; y < t.class_count(); ++y)
    require(t.class_rows(y).rows() > 0, ErrorKind::empty_class, "class " + std::to_string(y) + " has no real samples");
  if (is_coreset(cfg.method)) {
    require(!regime || regime->regime == Regime::input_input, ErrorKind::config,
            "coreset methods select real points and only run in the input_input regime");
    return run_coreset(cfg, t, s0);
  }
  RegimeSetup setup = regime ? *regime : identity_regime(t.features());
  require(setup.matched_t.rows() == t.size(), ErrorKind::shape, "regime real set does not match T");
  if (cfg.variants.siamese || cfg.variants.multiform || cfg.variants.channel_multiform)
    require(setup.regime == Regime::input_input, ErrorKind::config, "augmentation variants need the input_input regime");
  Run run(cfg, t, s0, std::move(setup));
  return run.go();
}

}  // namespace dcond
