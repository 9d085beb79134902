#include "dcond/method_config.hpp"

#include "dcond/error.hpp"
#include "dcond/privacy.hpp"

#include <json.hpp>

#include <cmath>
#include <set>

namespace dcond {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr Method kMethods[] = {Method::dm,         Method::gm,   Method::mmd,       Method::moment,
                               Method::sam,        Method::krr,  Method::trajectory, Method::bptt,
                               Method::cig_ridge,  Method::kcenter, Method::kmeans};

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::config, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(allowed.count(it.key()) > 0, ErrorKind::config, "unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// A DP variant is either a bare sigma or {epsilon, delta, sensitivity}.
double read_sigma(const json& j, const std::string& name) {
  if (j.is_number()) return j.get<double>();
  only_keys(j, {"sigma", "epsilon", "delta", "sensitivity"}, name);
  if (j.contains("sigma")) return j.at("sigma").get<double>();
  try {
    return dp_noise_calibration(j.at("epsilon").get<double>(), j.at("delta").get<double>(),
                                j.value("sensitivity", 1.0));
  } catch (const Error& e) {
    fail(ErrorKind::config, name + ": " + e.what());
  }
}

RobustOuter read_robust(const json& j, const std::string& name) {
  RobustOuter r;
  if (j.is_number()) {
    r.epsilon = j.get<double>();
    return r;
  }
  only_keys(j, {"epsilon", "steps"}, name);
  read(j, "epsilon", r.epsilon);
  read(j, "steps", r.steps);
  return r;
}

Variants parse_variants(const json& j) {
  only_keys(j, {"siamese", "multiform", "channel_multiform", "contrastive", "curvature", "kmeans_proxy",
                "dp_merf", "dp_grad", "robust_outer", "ridge_robust", "rat_truncation", "curvdc"},
            "variants");
  Variants v;
  if (j.contains("siamese")) v.siamese = parse_siamese_op(j.at("siamese").get<std::string>());
  if (j.contains("multiform")) v.multiform = j.at("multiform").get<int>();
  read(j, "channel_multiform", v.channel_multiform);
  read(j, "contrastive", v.contrastive);
  if (j.contains("curvature")) v.curvature = j.at("curvature").get<double>();
  if (j.contains("kmeans_proxy")) {
    const json& k = j.at("kmeans_proxy");
    only_keys(k, {"k", "period"}, "kmeans_proxy");
    KMeansProxy p;
    read(k, "k", p.k);
    read(k, "period", p.period);
    v.kmeans_proxy = p;
  }
  if (j.contains("dp_merf")) v.dp_merf = read_sigma(j.at("dp_merf"), "dp_merf");
  if (j.contains("dp_grad")) v.dp_grad = read_sigma(j.at("dp_grad"), "dp_grad");
  if (j.contains("robust_outer")) v.robust_outer = read_robust(j.at("robust_outer"), "robust_outer");
  if (j.contains("ridge_robust")) v.ridge_robust = read_robust(j.at("ridge_robust"), "ridge_robust");
  if (j.contains("rat_truncation")) v.rat_truncation = j.at("rat_truncation").get<int>();
  if (j.contains("curvdc")) v.curvdc = j.at("curvdc").get<double>();
  return v;
}

ModelProvenance parse_provenance(const std::string& s) {
  if (s == "random_init") return ModelProvenance::random_init;
  if (s == "pretrained") return ModelProvenance::pretrained;
  fail(ErrorKind::config, "model provenance must be random_init or pretrained, got '" + s + "'");
}

void incompatible(bool bad, const std::string& variant, const std::string& allowed, Method m) {
  require(!bad, ErrorKind::config,
          "variant " + variant + " is only available with " + allowed + " (method is " + to_string(m) + ")");
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::dm: return "dm";
    case Method::gm: return "gm";
    case Method::mmd: return "mmd";
    case Method::moment: return "moment";
    case Method::sam: return "sam";
    case Method::krr: return "krr";
    case Method::trajectory: return "trajectory";
    case Method::bptt: return "bptt";
    case Method::cig_ridge: return "cig_ridge";
    case Method::kcenter: return "kcenter";
    case Method::kmeans: return "kmeans";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : kMethods)
    if (to_string(m) == s) return m;
  fail(ErrorKind::config, "unknown method '" + s + "'");
}

bool is_matching(Method m) {
  return m == Method::dm || m == Method::gm || m == Method::mmd || m == Method::moment || m == Method::sam;
}

bool is_coreset(Method m) { return m == Method::kcenter || m == Method::kmeans; }

void validate(const MethodConfig& c) {
  auto positive = [](double v, const std::string& what) {
    require(std::isfinite(v) && v > 0.0, ErrorKind::config, what + " must be > 0");
  };
  auto nonneg = [](double v, const std::string& what) {
    require(std::isfinite(v) && v >= 0.0, ErrorKind::config, what + " must be >= 0");
  };
  require(c.steps >= 1, ErrorKind::config, "steps must be >= 1");
  positive(c.learning_rate, "learning_rate");
  require(c.optimizer == "adam" || c.optimizer == "sgd", ErrorKind::config, "optimizer must be adam or sgd");
  require(c.refresh >= 1, ErrorKind::config, "refresh must be >= 1");
  require(c.ensemble >= 1, ErrorKind::config, "ensemble must be >= 1");
  require(c.pretrain_epochs >= 0, ErrorKind::config, "pretrain_epochs must be >= 0");
  for (int w : c.hidden) require(w >= 1, ErrorKind::config, "hidden widths must be >= 1");
  nonneg(c.ridge, "ridge");
  require(c.inner_steps >= 1, ErrorKind::config, "inner_steps must be >= 1");
  positive(c.inner_lr, "inner_lr");
  positive(c.fd_step, "fd_step");
  validate(c.expert);
  require(c.power_iters >= 1, ErrorKind::config, "power_iters must be >= 1");
  require(c.kmeans_iters >= 0, ErrorKind::config, "kmeans_iters must be >= 0");
  if (c.kernel.scale) positive(*c.kernel.scale, "kernel.scale");
  require(c.kernel.gamma > 0.0 && c.kernel.gamma <= 2.0, ErrorKind::config, "kernel.gamma must lie in (0, 2]");
  require(c.kernel.feature_dim >= 1, ErrorKind::config, "kernel.feature_dim must be >= 1");
  if (c.kernel.family != "gaussian") parse_kernel_family(c.kernel.family);
  require(c.kernel.family != "pullback", ErrorKind::config,
          "pullback kernels come from the regime, not the method config");
  if (c.image_shape)
    require(c.image_shape->channels >= 1 && c.image_shape->height >= 1 && c.image_shape->width >= 1,
            ErrorKind::config, "image_shape entries must be >= 1");

  const Variants& v = c.variants;
  const Method m = c.method;
  if (v.dp_merf) {
    nonneg(*v.dp_merf, "dp_merf sigma");
    incompatible(m != Method::mmd && m != Method::dm, "dp_merf", "mmd or dm", m);
  }
  if (v.dp_grad) {
    nonneg(*v.dp_grad, "dp_grad sigma");
    incompatible(m != Method::gm, "dp_grad", "gm", m);
  }
  if (v.ridge_robust) {
    nonneg(v.ridge_robust->epsilon, "ridge_robust epsilon");
    require(v.ridge_robust->steps >= 1, ErrorKind::config, "ridge_robust steps must be >= 1");
    incompatible(m != Method::krr, "ridge_robust", "krr", m);
  }
  incompatible(v.contrastive && m != Method::gm, "contrastive", "gm", m);
  if (v.curvature) {
    nonneg(*v.curvature, "curvature rho");
    incompatible(m != Method::gm, "curvature", "gm", m);
  }
  if (v.robust_outer) {
    nonneg(v.robust_outer->epsilon, "robust_outer epsilon");
    require(v.robust_outer->steps >= 1, ErrorKind::config, "robust_outer steps must be >= 1");
    incompatible(m != Method::bptt, "robust_outer", "bptt", m);
  }
  if (v.rat_truncation) {
    require(*v.rat_truncation >= 1 && *v.rat_truncation <= c.inner_steps, ErrorKind::config,
            "rat_truncation window must lie in [1, inner_steps]");
    incompatible(m != Method::bptt, "rat_truncation", "bptt", m);
  }
  if (v.curvdc) {
    nonneg(*v.curvdc, "curvdc weight");
    incompatible(m != Method::bptt, "curvdc", "bptt", m);
  }
  if (v.kmeans_proxy) {
    require(v.kmeans_proxy->k >= 1 && v.kmeans_proxy->period >= 1, ErrorKind::config,
            "kmeans_proxy k and period must be >= 1");
    incompatible(!is_matching(m), "kmeans_proxy", "matching methods", m);
  }
  const int augmentations = (v.siamese ? 1 : 0) + (v.multiform ? 1 : 0) + (v.channel_multiform ? 1 : 0);
  require(augmentations <= 1, ErrorKind::config, "choose at most one of siamese, multiform, channel_multiform");
  if (augmentations == 1) {
    require(c.image_shape.has_value(), ErrorKind::config, "augmentation variants need image_shape");
    incompatible(!is_matching(m), "augmentation", "matching methods", m);
    incompatible(v.multiform && m != Method::dm && m != Method::gm, "multiform", "dm or gm", m);
    incompatible(v.channel_multiform && m != Method::gm, "channel_multiform", "gm", m);
    if (v.multiform) require(*v.multiform >= 1, ErrorKind::config, "multiform factor must be >= 1");
  }
  if (m == Method::cig_ridge) positive(c.ridge, "ridge (cig_ridge needs a strictly convex inner problem)");
  std::set<RegularizerId> seen;
  for (const auto& r : c.regularizers) {
    validate(r);
    require(seen.insert(r.id).second, ErrorKind::config, "regularizer " + to_string(r.id) + " listed twice");
    require(!is_coreset(m), ErrorKind::config, "coreset methods take no regularizers");
    require(r.id != RegularizerId::proj || m == Method::trajectory, ErrorKind::config,
            "regularizer proj needs the trajectory method");
    if (r.id == RegularizerId::con || r.id == RegularizerId::cos)
      require(c.ensemble >= 2, ErrorKind::config, "regularizer " + to_string(r.id) + " needs ensemble >= 2");
  }
}

MethodConfig parse_method_config(const std::string& text) {
  MethodConfig c;
  try {
    const json j = json::parse(text);
    only_keys(j, {"method", "steps", "learning_rate", "optimizer", "refresh", "ensemble", "provenance",
                  "pretrain_epochs", "hidden", "activation", "kernel", "ridge", "inner_steps", "inner_lr",
                  "fd_step", "expert", "power_iters", "kmeans_iters", "image_shape", "variants",
                  "regularizers", "clip", "seed"},
              "method config");
    c.method = parse_method(j.at("method").get<std::string>());
    read(j, "steps", c.steps);
    read(j, "learning_rate", c.learning_rate);
    read(j, "optimizer", c.optimizer);
    read(j, "refresh", c.refresh);
    read(j, "ensemble", c.ensemble);
    if (j.contains("provenance")) c.provenance = parse_provenance(j.at("provenance").get<std::string>());
    read(j, "pretrain_epochs", c.pretrain_epochs);
    read(j, "hidden", c.hidden);
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    if (j.contains("kernel")) {
      const json& k = j.at("kernel");
      only_keys(k, {"family", "scale", "gamma", "feature_dim", "seed"}, "kernel");
      read(k, "family", c.kernel.family);
      if (k.contains("scale") && !k.at("scale").is_string()) c.kernel.scale = k.at("scale").get<double>();
      if (k.contains("scale") && k.at("scale").is_string())
        require(k.at("scale").get<std::string>() == "median", ErrorKind::config,
                "kernel.scale must be a number or \"median\"");
      read(k, "gamma", c.kernel.gamma);
      read(k, "feature_dim", c.kernel.feature_dim);
      read(k, "seed", c.kernel.seed);
    }
    read(j, "ridge", c.ridge);
    read(j, "inner_steps", c.inner_steps);
    read(j, "inner_lr", c.inner_lr);
    read(j, "fd_step", c.fd_step);
    if (j.contains("expert")) {
      const json& e = j.at("expert");
      only_keys(e, {"learning_rate", "epochs", "batch_size", "seed"}, "expert");
      read(e, "learning_rate", c.expert.learning_rate);
      read(e, "epochs", c.expert.epochs);
      read(e, "batch_size", c.expert.batch_size);
      read(e, "seed", c.expert.seed);
    }
    read(j, "power_iters", c.power_iters);
    read(j, "kmeans_iters", c.kmeans_iters);
    if (j.contains("image_shape")) {
      auto dims = j.at("image_shape").get<std::vector<int>>();
      require(dims.size() == 3, ErrorKind::config, "image_shape is [channels, height, width]");
      c.image_shape = ImageShape{dims[0], dims[1], dims[2]};
    }
    if (j.contains("variants")) c.variants = parse_variants(j.at("variants"));
    if (j.contains("regularizers")) {
      for (const auto& r : j.at("regularizers")) {
        only_keys(r, {"name", "weight", "tau"}, "regularizer");
        RegularizerTerm t;
        t.id = parse_regularizer(r.at("name").get<std::string>());
        read(r, "weight", t.weight);
        read(r, "tau", t.tau);
        c.regularizers.push_back(t);
      }
    }
    read(j, "clip", c.clip);
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("method config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string method_config_json(const MethodConfig& c) {
  ordered_json j;
  j["method"] = to_string(c.method);
  j["steps"] = c.steps;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = c.optimizer;
  j["refresh"] = c.refresh;
  j["ensemble"] = c.ensemble;
  j["provenance"] = to_string(c.provenance);
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["hidden"] = c.hidden;
  j["activation"] = to_string(c.activation);
  ordered_json k;
  k["family"] = c.kernel.family;
  if (c.kernel.scale) k["scale"] = *c.kernel.scale;
  else k["scale"] = "median";
  k["gamma"] = c.kernel.gamma;
  k["feature_dim"] = c.kernel.feature_dim;
  k["seed"] = c.kernel.seed;
  j["kernel"] = k;
  j["ridge"] = c.ridge;
  j["inner_steps"] = c.inner_steps;
  j["inner_lr"] = c.inner_lr;
  j["fd_step"] = c.fd_step;
  j["expert"] = ordered_json{{"learning_rate", c.expert.learning_rate},
                             {"epochs", c.expert.epochs},
                             {"batch_size", c.expert.batch_size},
                             {"seed", c.expert.seed}};
  j["power_iters"] = c.power_iters;
  j["kmeans_iters"] = c.kmeans_iters;
  if (c.image_shape)
    j["image_shape"] = {c.image_shape->channels, c.image_shape->height, c.image_shape->width};
  ordered_json v = ordered_json::object();
  const Variants& var = c.variants;
  if (var.siamese) v["siamese"] = to_string(*var.siamese);
  if (var.multiform) v["multiform"] = *var.multiform;
  if (var.channel_multiform) v["channel_multiform"] = true;
  if (var.contrastive) v["contrastive"] = true;
  if (var.curvature) v["curvature"] = *var.curvature;
  if (var.kmeans_proxy) v["kmeans_proxy"] = {{"k", var.kmeans_proxy->k}, {"period", var.kmeans_proxy->period}};
  if (var.dp_merf) v["dp_merf"] = ordered_json{{"sigma", *var.dp_merf}};
  if (var.dp_grad) v["dp_grad"] = ordered_json{{"sigma", *var.dp_grad}};
  if (var.robust_outer)
    v["robust_outer"] = ordered_json{{"epsilon", var.robust_outer->epsilon}, {"steps", var.robust_outer->steps}};
  if (var.ridge_robust)
    v["ridge_robust"] = ordered_json{{"epsilon", var.ridge_robust->epsilon}, {"steps", var.ridge_robust->steps}};
  if (var.rat_truncation) v["rat_truncation"] = *var.rat_truncation;
  if (var.curvdc) v["curvdc"] = *var.curvdc;
  j["variants"] = v;
  ordered_json regs = ordered_json::array();
  for (const auto& r : c.regularizers)
    regs.push_back(ordered_json{{"name", to_string(r.id)}, {"weight", r.weight}, {"tau", r.tau}});
  j["regularizers"] = regs;
  j["clip"] = c.clip;
  j["seed"] = c.seed;
  return j.dump(2);
}

}  // namespace dcond
