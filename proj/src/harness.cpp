#include "dcond/harness.hpp"

#include "dcond/error.hpp"
#include "dcond/plots.hpp"
#include "dcond/rng.hpp"
#include "dcond/util.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <future>
#include <numeric>

namespace dcond {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  require(j.is_object(), ErrorKind::config, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    require(known, ErrorKind::config, "unknown key '" + it.key() + "' in " + where);
  }
}

InitMode parse_init(const std::string& s) {
  if (s == "subsample") return InitMode::subsample;
  if (s == "gaussian_noise") return InitMode::gaussian_noise;
  fail(ErrorKind::config, "unknown init '" + s + "'");
}

std::string to_string(InitMode m) { return m == InitMode::subsample ? "subsample" : "gaussian_noise"; }

void validate(const RunConfig& c) {
  require(!c.dataset.empty(), ErrorKind::config, "dataset path is required");
  require(c.per_class >= 1, ErrorKind::config, "per_class must be >= 1");
  require(c.evaluation.repeats >= 1, ErrorKind::config, "evaluation.repeats must be >= 1");
  require(!c.evaluation.architectures.empty(), ErrorKind::config, "evaluation.architectures is empty");
  for (const auto& a : c.evaluation.architectures)
    for (int w : a) require(w >= 1, ErrorKind::config, "hidden widths must be >= 1");
  require(c.evaluation.hypotheses >= 1, ErrorKind::config, "evaluation.hypotheses must be >= 1");
  validate(c.evaluation.train);
  if (c.evaluation.robustness) {
    require(c.evaluation.robustness->epsilon >= 0.0, ErrorKind::config, "robustness epsilon must be >= 0");
    require(c.evaluation.robustness->steps >= 1, ErrorKind::config, "robustness steps must be >= 1");
  }
  require(c.train_fraction > 0.0 && c.train_fraction < 1.0, ErrorKind::config,
          "train_fraction must lie in (0, 1)");
  if (c.regime != Regime::input_input)
    require(c.latent_dim && *c.latent_dim >= 1, ErrorKind::config, "latent regimes need latent_dim >= 1");
  if (c.latent_dim) require(*c.latent_dim >= 1, ErrorKind::config, "latent_dim must be >= 1");
}

// Rethrows with the failing stage named, keeping the kind for the exit code.
template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    std::string what = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    if (what.rfind(prefix, 0) == 0) what = what.substr(prefix.size());
    throw Error(e.kind(), name + ": " + what);
  }
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single repeat.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct RepeatOutcome {
  double acc = 0.0, base_acc = 0.0;
  double loss = 0.0, base_loss = 0.0;
  std::optional<double> robust, base_robust;
};

double robust_accuracy(const Mlp& m, const LabeledDataset& test, const RobustnessConfig& r) {
  const double step = r.epsilon > 0.0 ? 2.5 * r.epsilon / r.steps : 0.0;
  Eigen::MatrixXd adv = pgd_attack_batch(m, test.features(), test.labels(), r.epsilon, r.steps, step);
  return accuracy(m, test.with_features(std::move(adv)));
}

RepeatOutcome one_repeat(const std::vector<int>& widths, const LabeledDataset& synthetic,
                         const LabeledDataset& train, const LabeledDataset& test, const EvalConfig& cfg,
                         std::uint64_t seed) {
  Mlp init = Mlp::init(widths, cfg.activation, derive_seed(seed, "init"));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, "train");
  Mlp hs = sgd_train(init, synthetic, tc).model;
  Mlp ht = sgd_train(init, train, tc).model;
  RepeatOutcome o;
  o.acc = accuracy(hs, test);
  o.base_acc = accuracy(ht, test);
  o.loss = mean_loss(hs, test.features(), test.labels(), tc.loss);
  o.base_loss = mean_loss(ht, test.features(), test.labels(), tc.loss);
  if (cfg.robustness) {
    o.robust = robust_accuracy(hs, test, *cfg.robustness);
    o.base_robust = robust_accuracy(ht, test, *cfg.robustness);
  }
  return o;
}

ordered_json double_array(const std::vector<double>& v) {
  ordered_json a = ordered_json::array();
  for (double x : v) a.push_back(x);
  return a;
}

std::map<std::string, std::string> flatten_config(const std::string& config_json) {
  std::map<std::string, std::string> out;
  const json flat = json::parse(config_json).flatten();
  for (auto it = flat.begin(); it != flat.end(); ++it)
    out[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    only_keys(j, {"dataset", "per_class", "init", "method", "evaluation", "regime", "latent_dim",
                  "train_fraction", "output", "seed"},
              "run config");
    const std::filesystem::path ds = j.at("dataset").get<std::string>();
    c.dataset = ds.is_absolute() || base_dir.empty() ? ds : base_dir / ds;
    read(j, "per_class", c.per_class);
    if (j.contains("init")) c.init = parse_init(j.at("init").get<std::string>());
    require(j.contains("method"), ErrorKind::config, "run config needs a method section");
    c.method = parse_method_config(j.at("method").dump());
    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      only_keys(e, {"architectures", "activation", "repeats", "train", "robustness", "hypotheses", "concurrent"},
                "evaluation");
      read(e, "architectures", c.evaluation.architectures);
      if (e.contains("activation")) c.evaluation.activation = parse_activation(e.at("activation").get<std::string>());
      read(e, "repeats", c.evaluation.repeats);
      if (e.contains("train")) {
        const json& t = e.at("train");
        only_keys(t, {"learning_rate", "epochs", "batch_size", "loss"}, "evaluation.train");
        read(t, "learning_rate", c.evaluation.train.learning_rate);
        read(t, "epochs", c.evaluation.train.epochs);
        read(t, "batch_size", c.evaluation.train.batch_size);
        if (t.contains("loss")) c.evaluation.train.loss = parse_loss(t.at("loss").get<std::string>());
      }
      if (e.contains("robustness")) {
        const json& r = e.at("robustness");
        only_keys(r, {"epsilon", "steps"}, "evaluation.robustness");
        RobustnessConfig rc;
        read(r, "epsilon", rc.epsilon);
        read(r, "steps", rc.steps);
        c.evaluation.robustness = rc;
      }
      read(e, "hypotheses", c.evaluation.hypotheses);
      read(e, "concurrent", c.evaluation.concurrent);
    }
    if (j.contains("regime")) c.regime = parse_regime(j.at("regime").get<std::string>());
    if (j.contains("latent_dim")) c.latent_dim = j.at("latent_dim").get<int>();
    read(j, "train_fraction", c.train_fraction);
    if (j.contains("output")) {
      const std::filesystem::path o = j.at("output").get<std::string>();
      c.output = o.is_absolute() || base_dir.empty() ? o : base_dir / o;
    }
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("run config: ") + e.what());
  }
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("cannot read config: ") + e.what());
  }
  return parse_run_config(text, path.parent_path());
}

std::string run_config_json(const RunConfig& c) {
  ordered_json j;
  j["dataset"] = c.dataset.filename().string();  // directory left out so reports move with the data
  j["per_class"] = c.per_class;
  j["init"] = to_string(c.init);
  j["method"] = ordered_json::parse(method_config_json(c.method));
  ordered_json e;
  e["architectures"] = c.evaluation.architectures;
  e["activation"] = to_string(c.evaluation.activation);
  e["repeats"] = c.evaluation.repeats;
  e["train"] = {{"learning_rate", c.evaluation.train.learning_rate},
                {"epochs", c.evaluation.train.epochs},
                {"batch_size", c.evaluation.train.batch_size},
                {"loss", to_string(c.evaluation.train.loss)}};
  if (c.evaluation.robustness)
    e["robustness"] = {{"epsilon", c.evaluation.robustness->epsilon}, {"steps", c.evaluation.robustness->steps}};
  e["hypotheses"] = c.evaluation.hypotheses;
  j["evaluation"] = e;
  j["regime"] = to_string(c.regime);
  if (c.latent_dim) j["latent_dim"] = *c.latent_dim;
  j["train_fraction"] = c.train_fraction;
  j["seed"] = c.seed;
  return j.dump(2);
}

std::string EvalReport::to_json() const {
  ordered_json j;
  ordered_json archs = ordered_json::array();
  for (const auto& a : architectures) {
    ordered_json x;
    x["widths"] = a.widths;
    x["accuracies"] = double_array(a.accuracies);
    x["mean"] = a.mean;
    x["std"] = a.std;
    x["baseline_accuracies"] = double_array(a.baseline_accuracies);
    x["baseline_mean"] = a.baseline_mean;
    x["baseline_std"] = a.baseline_std;
    if (a.robust_mean) x["robust_mean"] = *a.robust_mean;
    if (a.baseline_robust_mean) x["baseline_robust_mean"] = *a.baseline_robust_mean;
    archs.push_back(x);
  }
  j["architectures"] = archs;
  j["summary"] = ordered_json::object();
  for (const auto& [k, v] : summary) j["summary"][k] = v;
  if (discrepancy) j["discrepancy"] = ordered_json::parse(discrepancy->to_json());
  j["hyperparameters"] = ordered_json::object();
  for (const auto& [k, v] : hyperparameters) j["hyperparameters"][k] = v;
  return j.dump(2) + "\n";
}

EvalReport evaluate_synthetic(const LabeledDataset& synthetic, const LabeledDataset& real_train,
                              const LabeledDataset& real_test, const EvalConfig& cfg, std::uint64_t seed) {
  require(cfg.repeats >= 1, ErrorKind::config, "evaluation.repeats must be >= 1");
  require(synthetic.dim() == real_train.dim() && real_test.dim() == real_train.dim(), ErrorKind::shape,
          "synthetic and real feature widths differ");
  const int classes = real_train.class_count();
  const LabeledDataset train = real_train.class_major();
  const LabeledDataset syn = synthetic.class_major();
  EvalReport report;
  double gd = 0.0;
  int runs = 0;
  for (std::size_t a = 0; a < cfg.architectures.size(); ++a) {
    std::vector<int> widths{static_cast<int>(real_train.dim())};
    for (int w : cfg.architectures[a]) widths.push_back(w);
    widths.push_back(classes);
    const std::uint64_t arch_seed = derive_seed(seed, static_cast<std::uint64_t>(a));

    std::vector<RepeatOutcome> outcomes;
    if (cfg.concurrent && cfg.repeats > 1) {
      std::vector<std::future<RepeatOutcome>> jobs;
      for (int r = 0; r < cfg.repeats; ++r)
        jobs.push_back(std::async(std::launch::async, one_repeat, std::cref(widths), std::cref(syn),
                                  std::cref(train), std::cref(real_test), std::cref(cfg),
                                  derive_seed(arch_seed, static_cast<std::uint64_t>(r))));
      for (auto& j : jobs) outcomes.push_back(j.get());
    } else {
      for (int r = 0; r < cfg.repeats; ++r)
        outcomes.push_back(one_repeat(widths, syn, train, real_test, cfg,
                                      derive_seed(arch_seed, static_cast<std::uint64_t>(r))));
    }

    ArchitectureScore s;
    s.widths = widths;
    std::vector<double> rob, base_rob;
    for (const auto& o : outcomes) {
      s.accuracies.push_back(o.acc);
      s.baseline_accuracies.push_back(o.base_acc);
      gd += std::abs(o.loss - o.base_loss);
      ++runs;
      if (o.robust) rob.push_back(*o.robust);
      if (o.base_robust) base_rob.push_back(*o.base_robust);
    }
    s.mean = mean_of(s.accuracies);
    s.std = std_of(s.accuracies);
    s.baseline_mean = mean_of(s.baseline_accuracies);
    s.baseline_std = std_of(s.baseline_accuracies);
    if (!rob.empty()) s.robust_mean = mean_of(rob);
    if (!base_rob.empty()) s.baseline_robust_mean = mean_of(base_rob);
    report.architectures.push_back(std::move(s));
  }
  report.summary["condensed_accuracy"] = report.architectures.front().mean;
  report.summary["baseline_accuracy"] = report.architectures.front().baseline_mean;
  report.summary["accuracy_gap"] = report.summary["baseline_accuracy"] - report.summary["condensed_accuracy"];
  // Mean |test loss(trained on S) - test loss(trained on T)|, the generalization gap being estimated.
  report.summary["gd_estimate"] = gd / runs;
  report.hyperparameters["evaluation.seed"] = std::to_string(seed);
  report.hyperparameters["evaluation.test_size"] = std::to_string(real_test.size());
  report.hyperparameters["evaluation.train_size"] = std::to_string(real_train.size());
  report.hyperparameters["evaluation.std"] = "sample (n-1)";
  report.hyperparameters["evaluation.init"] = "shared between synthetic and baseline runs";
  if (cfg.robustness) report.hyperparameters["evaluation.pgd_step"] = "2.5*epsilon/steps";
  return report;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  validate(cfg);
  auto t0 = Clock::now();
  std::map<std::string, double> timings;

  LabeledDataset raw = stage("load", [&] { return load_dataset(cfg.dataset); });
  NormalizedDataset norm = stage("normalize", [&] { return normalize_features(raw); });
  TrainTestSplit split = stage("split", [&] {
    return stratified_split(norm.data, cfg.train_fraction, derive_seed(cfg.seed, "split"));
  });
  timings["load"] = seconds_since(t0);

  t0 = Clock::now();
  std::optional<LinearAutoencoder> ae;
  std::optional<RegimeSetup> setup;
  if (cfg.latent_dim || cfg.regime != Regime::input_input) {
    stage("autoencoder", [&] {
      const int m = cfg.latent_dim ? *cfg.latent_dim : static_cast<int>(split.train.dim());
      ae = fit_linear_autoencoder(split.train, m);
      setup = make_regime(cfg.regime, *ae, split.train.features());
      return 0;
    });
  }
  timings["autoencoder"] = seconds_since(t0);

  t0 = Clock::now();
  SyntheticDataset s0 = stage("init", [&] {
    return init_synthetic(split.train, cfg.per_class, cfg.init, derive_seed(cfg.seed, "init"));
  });
  MethodConfig mc = cfg.method;
  mc.seed = derive_seed(derive_seed(cfg.seed, "condense"), cfg.method.seed);
  CondenseResult cond = stage("condense", [&] { return condense(mc, split.train, s0, setup); });
  timings["condense"] = seconds_since(t0);

  t0 = Clock::now();
  EvalReport report = stage("evaluate", [&] {
    return evaluate_synthetic(cond.s.as_labeled(), split.train, split.test, cfg.evaluation,
                              derive_seed(cfg.seed, "evaluate"));
  });
  timings["evaluate"] = seconds_since(t0);

  t0 = Clock::now();
  report.discrepancy = stage("hierarchy", [&] {
    std::vector<int> widths{static_cast<int>(split.train.dim())};
    for (int w : cfg.evaluation.architectures.front()) widths.push_back(w);
    widths.push_back(split.train.class_count());
    ModelBatch h = random_model_batch(widths, cfg.evaluation.activation, cfg.evaluation.hypotheses,
                                      derive_seed(cfg.seed, "hypotheses"));
    HierarchyOptions o;
    o.cd_seed = derive_seed(cfg.seed, "cd");
    o.vd_seed = derive_seed(cfg.seed, "vd");
    o.loss = cfg.evaluation.train.loss;
    return hierarchy_report(split.train, cond.s.as_labeled(), h, o);
  });
  timings["hierarchy"] = seconds_since(t0);

  report.hyperparameters.merge(flatten_config(run_config_json(cfg)));
  report.hyperparameters["seed.split"] = "derive(seed, split)";
  report.hyperparameters["seed.init"] = "derive(seed, init)";
  report.hyperparameters["seed.condense"] = "derive(derive(seed, condense), method.seed)";
  report.hyperparameters["seed.evaluate"] = "derive(seed, evaluate)";
  report.hyperparameters["seed.hypotheses"] = "derive(seed, hypotheses)";
  report.hyperparameters["normalization"] = "min-max over the full dataset";
  report.summary["condense.steps_logged"] = static_cast<double>(cond.log.steps.size());
  if (!cond.log.steps.empty()) report.summary["condense.final_objective"] = cond.log.steps.back().objective;
  report.summary["condense.model_refreshes"] = cond.log.refreshes;
  if (cond.log.privacy.invocations > 0) {
    report.summary["privacy.sigma"] = cond.log.privacy.sigma;
    report.summary["privacy.clip_norm"] = cond.log.privacy.clip_norm;
    report.summary["privacy.invocations"] = cond.log.privacy.invocations;
  }
  if (cond.inner_lr) report.summary["condense.inner_lr"] = *cond.inner_lr;
  if (!cond.covers.empty()) {
    double radius = 0.0;
    for (const auto& c : cond.covers) radius = std::max(radius, c.radius);
    report.summary["kcenter.radius"] = radius;
  }

  RunResult r{std::move(cond), std::move(report), std::move(timings), std::move(ae), norm.params,
              std::move(split.train), std::move(split.test)};
  return r;
}

RunResult run_and_write(const RunConfig& cfg, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  const bool created_dir = !fs::exists(out);
  // Only paths this run creates are tracked, so cleanup never touches older entries.
  auto track = [&](const fs::path& p) {
    if (!fs::exists(p)) written.push_back(p);
  };
  auto write = [&](const fs::path& p, const std::string& text) {
    track(p);
    write_text_file(p, text);
  };
  try {
    RunResult r = run(cfg);
    stage("write", [&] {
      const fs::path csv = out / "synthetic.csv";
      track(csv);
      track(fs::path(csv.string() + ".meta.json"));
      save_synthetic(csv, r.condensed.s, r.normalization);
      const std::string report = r.report.to_json();
      write(out / "report.json", report);
      const std::string steps = r.condensed.log.csv();
      write(out / "steps.csv", steps);
      if (r.autoencoder) write(out / "autoencoder.json", r.autoencoder->to_json());
      ordered_json t;
      for (const auto& [k, v] : r.timings) t[k] = v;
      write(out / "timings.json", t.dump(2) + "\n");
      for (const char* name : {"objective.csv", "objective.svg", "accuracy.csv", "accuracy.svg"}) track(out / name);
      emit_plots(report, steps, out);
      return 0;
    });
    return r;
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    if (created_dir && fs::is_empty(out, ec)) fs::remove(out, ec);
    throw;
  }
}

DiscrepancyReport discrepancy_command(const std::filesystem::path& a, const std::filesystem::path& b,
                                      const std::vector<std::string>& metrics, std::uint64_t seed) {
  LabeledDataset ta = stage("load " + a.filename().string(), [&] { return load_dataset(a); });
  LabeledDataset tb = stage("load " + b.filename().string(), [&] { return load_dataset(b); });
  require(ta.dim() == tb.dim(), ErrorKind::shape, "datasets have different feature widths");
  const int classes = std::max(ta.class_count(), tb.class_count());
  LabeledDataset t(ta.features(), ta.labels(), classes);
  LabeledDataset s(tb.features(), tb.labels(), classes);
  HierarchyOptions o;
  o.cd_seed = derive_seed(seed, "cd");
  DiscrepancyReport r = stage("discrepancy", [&] { return point_set_report(t, s, metrics, o); });
  r.hyperparameters["seed"] = std::to_string(seed);
  return r;
}

EvalReport evaluate_command(const std::filesystem::path& synthetic, const std::filesystem::path& real,
                            const EvalConfig& cfg, std::uint64_t seed) {
  LabeledDataset raw = stage("load real", [&] { return load_dataset(real); });
  LabeledDataset syn_raw = stage("load synthetic", [&] { return load_dataset(synthetic); });
  require(syn_raw.class_count() <= raw.class_count(), ErrorKind::label,
          "synthetic labels exceed the real class count");
  LabeledDataset syn(syn_raw.features(), syn_raw.labels(), raw.class_count());
  NormalizedDataset norm = normalize_features(raw);
  TrainTestSplit split = stage("split", [&] { return stratified_split(norm.data, 0.8, derive_seed(seed, "split")); });
  EvalReport r = stage("evaluate", [&] {
    return evaluate_synthetic(syn, split.train, split.test, cfg, derive_seed(seed, "evaluate"));
  });
  r.hyperparameters["seed"] = std::to_string(seed);
  r.hyperparameters["real.normalization"] = "min-max over the full dataset";
  r.hyperparameters["synthetic.features"] = "used as stored (normalized space)";
  return r;
}

}  // namespace dcond
