#include "dcond/bilevel.hpp"
#include "dcond/condense.hpp"
#include "dcond/coreset.hpp"
#include "dcond/error.hpp"
#include "dcond/krr.hpp"
#include "dcond/matching.hpp"
#include "dcond/privacy.hpp"
#include "dcond/regularizers.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

using namespace dcond;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;
}

double rel_err(const MatrixXd& a, const MatrixXd& oracle) {
  return (a - oracle).norm() / std::max(oracle.norm(), 1e-8);
}

Mlp linear_model(int in, int out) {
  return Mlp({in, out}, Activation::relu, {DenseLayer{MatrixXd::Identity(out, in), VectorXd::Zero(out)}});
}

std::vector<Mlp> tanh_models(int in, int classes, int count, std::uint64_t seed) {
  std::vector<Mlp> out;
  for (int i = 0; i < count; ++i) out.push_back(Mlp::init({in, 5, 4, classes}, Activation::tanh, seed + i));
  return out;
}

MatchOptions options_for(MatchMethod m) {
  MatchOptions o;
  o.method = m;
  o.kernel = KernelSpec::gaussian(0.7);
  return o;
}

std::vector<double> objectives(const CondenseResult& r) {
  std::vector<double> out;
  for (const auto& s : r.log.steps) out.push_back(s.objective);
  return out;
}

MethodConfig small_config(Method m, int steps = 6) {
  MethodConfig c;
  c.method = m;
  c.steps = steps;
  c.learning_rate = 0.02;
  c.refresh = 3;
  c.hidden = {6};
  c.activation = Activation::tanh;
  c.kernel.scale = 1.0;
  c.inner_steps = 2;
  c.expert = TrainConfig{0.1, 2, 8, Loss::cross_entropy, 3};
  c.seed = 11;
  return c;
}

struct Toy {
  LabeledDataset t;
  SyntheticDataset s0;
};

Toy toy(std::uint64_t seed, int classes = 2, int per_class = 2) {
  Rng rng(seed);
  auto t = testing::random_labeled(6, classes, 3, rng);
  return {t, init_synthetic(t, per_class, InitMode::subsample, seed + 1)};
}

const MatchMethod kAllMatching[] = {MatchMethod::dm, MatchMethod::gm, MatchMethod::mmd, MatchMethod::moment,
                                    MatchMethod::sam};

}  // namespace

TEST_SUITE("condense") {
  TEST_CASE("method config parsing and compatibility") {
    auto c = parse_method_config(R"({"method": "gm", "steps": 7, "variants": {"contrastive": true},
                                     "regularizers": [{"name": "div", "weight": 0.5}]})");
    CHECK(c.method == Method::gm);
    CHECK(c.steps == 7);
    CHECK(c.variants.contrastive);
    REQUIRE(c.regularizers.size() == 1);
    CHECK(c.regularizers[0].id == RegularizerId::div);
    CHECK(method_config_json(parse_method_config(method_config_json(c))) == method_config_json(c));

    auto dp = parse_method_config(R"({"method": "mmd", "variants": {"dp_merf": {"epsilon": 1, "delta": 1e-5}}})");
    CHECK(*dp.variants.dp_merf == doctest::Approx(dp_noise_calibration(1.0, 1e-5, 1.0)));

    for (const char* bad : {
             R"({"method": "dm", "bogus": 1})",
             R"({"method": "gm", "variants": {"dp_merf": 0.5}})",
             R"({"method": "dm", "variants": {"ridge_robust": 0.1}})",
             R"({"method": "dm", "variants": {"contrastive": true}})",
             R"({"method": "dm", "variants": {"curvature": 0.1}})",
             R"({"method": "gm", "steps": 0})",
             R"({"method": "gm", "learning_rate": -1})",
             R"({"method": "gm", "variants": {"dp_grad": -1}})",
             R"({"method": "krr", "variants": {"ridge_robust": -0.1}})",
             R"({"method": "dm", "regularizers": [{"name": "intra", "tau": 0}]})",
             R"({"method": "dm", "regularizers": [{"name": "con", "weight": 1}]})",
             R"({"method": "kcenter", "regularizers": [{"name": "div", "weight": 1}]})",
             R"({"method": "dm", "variants": {"multiform": 2}})",
             R"({"method": "nope"})",
             "{not json",
         })
      CHECK_MESSAGE(kind_of([&] { parse_method_config(bad); }) == ErrorKind::config, bad);
  }

  TEST_CASE("matching objectives vanish when S copies T") {
    Rng rng(3);
    auto t = testing::random_labeled(3, 2, 3, rng).class_major();
    for (auto m : kAllMatching) {
      MatchingObjective obj(options_for(m), tanh_models(3, 2, 2, 5), t);
      auto v = obj.evaluate(t.features(), t.labels());
      CHECK_MESSAGE(std::abs(v.value) <= 1e-12, to_string(m));
    }
  }

  TEST_CASE("analytic matching gradients agree with central differences") {
    for (auto m : kAllMatching)
      for (int trial = 0; trial < 5; ++trial) {
        Rng rng(100 + trial);
        auto t = testing::random_labeled(4, 2, 3, rng);
        MatrixXd s = testing::uniform_matrix(4, 3, rng);
        Labels sl{0, 0, 1, 1};
        MatchingObjective obj(options_for(m), tanh_models(3, 2, 2, 40 + trial), t);
        auto f = [&](const MatrixXd& x) { return obj.evaluate(x, sl).value; };
        const double err = rel_err(obj.evaluate(s, sl).grad, testing::numeric_gradient(f, s, 1e-5));
        CHECK_MESSAGE(err <= 1e-4, to_string(m) << " trial " << trial << " err " << err);
      }
  }

  TEST_CASE("matching objectives ignore the order of real rows within a class") {
    Rng rng(8);
    auto t = testing::random_labeled(5, 2, 3, rng);
    std::vector<std::size_t> perm(static_cast<std::size_t>(t.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = t.subset(perm);
    MatrixXd s = testing::uniform_matrix(4, 3, rng);
    Labels sl{0, 0, 1, 1};
    for (auto m : kAllMatching) {
      auto models = tanh_models(3, 2, 2, 9);
      const double a = MatchingObjective(options_for(m), models, t).evaluate(s, sl).value;
      const double b = MatchingObjective(options_for(m), models, shuffled).evaluate(s, sl).value;
      CHECK_MESSAGE(std::abs(a - b) <= 1e-10, to_string(m));
    }
    auto k = KernelSpec::gaussian(1.0);
    MatrixXd ys = one_hot(sl, 2);
    CHECK(krr_loss(k, s, ys, t.features(), one_hot(t.labels(), 2), 1e-3).value ==
          doctest::Approx(krr_loss(k, s, ys, shuffled.features(), one_hot(shuffled.labels(), 2), 1e-3).value)
              .epsilon(1e-10));
  }

  TEST_CASE("ridge fit on a scalar linear kernel") {
    // A linear no-bias model with unit weight has the feature map x, so k(a, b) = ab.
    Mlp unit({1, 1}, Activation::relu, {DenseLayer{MatrixXd::Constant(1, 1, 1.0), VectorXd()}}, false);
    auto k = KernelSpec::nfk({unit});
    auto p = krr_fit(k, testing::column({2.0}), testing::column({1.0}), 1.0);
    CHECK(p.alpha(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p.predict(testing::column({3.0}))(0, 0) == doctest::Approx(1.2).epsilon(1e-12));

    auto heavy = krr_fit(k, testing::column({2.0}), testing::column({1.0}), 1e9);
    CHECK(std::abs(heavy.predict(testing::column({3.0}))(0, 0)) < 1e-8);
    CHECK(heavy.alpha.norm() < 1e-8);
  }

  TEST_CASE("ridge fit interpolates at tiny ridge and rejects singular systems") {
    Rng rng(4);
    MatrixXd s = testing::uniform_matrix(5, 2, rng);
    MatrixXd y = testing::gaussian_matrix(5, 3, rng);
    auto k = KernelSpec::gaussian(2.0);
    auto p = krr_fit(k, s, y, 1e-8);
    CHECK((p.predict(s) - y).cwiseAbs().maxCoeff() <= 1e-4);
    MatrixXd a = gram_matrix(k, s, s) + 1e-8 * MatrixXd::Identity(5, 5);
    CHECK((p.alpha - a.colPivHouseholderQr().solve(y)).norm() <= 1e-6 * p.alpha.norm());

    MatrixXd dup(2, 2);
    dup << 0.3, 0.4, 0.3, 0.4;
    CHECK(kind_of([&] { krr_fit(k, dup, MatrixXd::Identity(2, 2), 0.0); }) == ErrorKind::linear_algebra);
    CHECK(kind_of([&] { krr_fit(k, dup, MatrixXd::Identity(2, 2), -1.0); }) == ErrorKind::domain);
  }

  TEST_CASE("ridge loss gradients agree with central differences") {
    for (int trial = 0; trial < 10; ++trial) {
      Rng rng(200 + trial);
      const double gamma = trial % 2 == 0 ? 2.0 : 1.5;
      auto k = KernelSpec::gamma_exponential(0.5 + trial * 0.1, gamma);
      MatrixXd s = testing::uniform_matrix(3, 2, rng), t = testing::uniform_matrix(6, 2, rng);
      MatrixXd ys = testing::gaussian_matrix(3, 2, rng), yt = testing::gaussian_matrix(6, 2, rng);
      auto l = krr_loss(k, s, ys, t, yt, 1e-2, true);
      auto fs = [&](const MatrixXd& x) { return krr_loss(k, x, ys, t, yt, 1e-2).value; };
      auto ft = [&](const MatrixXd& x) { return krr_loss(k, s, ys, x, yt, 1e-2).value; };
      CHECK(rel_err(l.grad_s, testing::numeric_gradient(fs, s)) <= 1e-4);
      CHECK(rel_err(l.grad_t, testing::numeric_gradient(ft, t)) <= 1e-4);
    }
    Rng rng(9);
    MatrixXd s = testing::uniform_matrix(2, 2, rng), t = testing::uniform_matrix(4, 2, rng);
    MatrixXd ys = MatrixXd::Identity(2, 2), yt = one_hot({0, 1, 0, 1}, 2);
    CHECK(krr_adversarial_real(KernelSpec::gaussian(1.0), s, ys, t, yt, 1e-3, 0.0, 4) == t);
  }

  TEST_CASE("ridge condensation reaches a representable optimum") {
    MatrixXd tx(5, 2);
    tx.rowwise() = Eigen::RowVector2d(0.3, 0.7);
    LabeledDataset t(tx, Labels(5, 0), 1);
    MatrixXd s0(1, 2);
    s0 << 0.8, 0.1;
    auto c = small_config(Method::krr, 800);
    c.ridge = 1e-4;
    auto r = condense(c, t, SyntheticDataset(s0, 1, 1, "manual"));
    CHECK(r.log.steps.back().method_loss <= 1e-6);
    auto l = krr_loss(KernelSpec::gaussian(1.0), r.s.features(), MatrixXd::Ones(1, 1), tx, MatrixXd::Ones(5, 1), 1e-4);
    CHECK(l.value <= 1e-6);
  }

  TEST_CASE("ridge condensation separates 1-D blobs") {
    Rng rng(21);
    std::normal_distribution<double> g(0.0, 0.05);
    MatrixXd x(200, 1);
    Labels y;
    for (int i = 0; i < 200; ++i) {
      y.push_back(i % 2);
      x(i, 0) = 0.25 + 0.5 * (i % 2) + g(rng);
    }
    LabeledDataset t(x, y, 2);
    auto c = small_config(Method::krr, 100);
    c.kernel.scale = 20.0;
    auto r = condense(c, t, init_synthetic(t, 1, InitMode::gaussian_noise, 4));
    auto p = krr_fit(KernelSpec::gaussian(20.0), r.s, c.ridge);
    MatrixXd pred = p.predict(x);
    int correct = 0;
    for (int i = 0; i < 200; ++i) {
      Eigen::Index arg;
      pred.row(i).maxCoeff(&arg);
      correct += arg == y[static_cast<std::size_t>(i)];
    }
    CHECK(correct / 200.0 >= 0.95);
  }

  TEST_CASE("unrolled outer gradient vanishes at a stationary start") {
    Rng rng(31);
    auto t = testing::random_labeled(5, 2, 2, rng);
    // Exact least-squares fit of the one-hot targets makes theta0 stationary for the mse loss.
    MatrixXd xa(t.size(), 3);
    xa << t.features(), VectorXd::Ones(t.size());
    MatrixXd w = xa.colPivHouseholderQr().solve(one_hot(t.labels(), 2));
    Mlp theta0({2, 2}, Activation::relu, {DenseLayer{w.topRows(2).transpose(), w.row(2).transpose()}});
    CHECK(theta0.backward(t.features(), t.labels(), Loss::mse).params.norm() < 1e-10);

    BpttOptions o;
    o.loss = Loss::mse;
    o.inner_steps = 3;
    BpttObjective obj(theta0, t, t.labels(), o);
    auto r = obj.evaluate(t.features(), 0.1);
    CHECK(r.grad_s.norm() <= 1e-4);
    CHECK(std::abs(r.grad_eta) <= 1e-4);
  }

  TEST_CASE("unrolled outer gradient agrees with an independent difference") {
    Rng rng(32);
    auto t = testing::random_labeled(4, 2, 2, rng);
    MatrixXd s = testing::uniform_matrix(2, 2, rng);
    BpttObjective obj(Mlp::init({2, 4, 2}, Activation::tanh, 5), t, {0, 1}, BpttOptions{});
    auto r = obj.evaluate(s, 0.2);
    auto f = [&](const MatrixXd& x) { return obj.value(x, 0.2); };
    CHECK(rel_err(r.grad_s, testing::numeric_gradient(f, s, 1e-4)) <= 1e-4);
    CHECK(r.value == doctest::Approx(obj.value(s, 0.2)));
  }

  TEST_CASE("implicit ridge gradient agrees with central differences") {
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(300 + trial);
      MatrixXd xs = testing::gaussian_matrix(2, 2, rng), ys = testing::gaussian_matrix(2, 2, rng);
      MatrixXd xt = testing::gaussian_matrix(6, 2, rng), yt = testing::gaussian_matrix(6, 2, rng);
      const double lambda = 0.1 + 0.05 * trial;
      const bool bias = trial % 2 == 0;
      auto r = cig_ridge(xs, ys, xt, yt, lambda, bias);
      auto f = [&](const MatrixXd& x) { return cig_ridge_outer(x, ys, xt, yt, lambda, bias); };
      CHECK(r.value == doctest::Approx(f(xs)));
      const double err = rel_err(r.grad, testing::numeric_gradient(f, xs, 1e-6));
      CHECK_MESSAGE(err <= 1e-4, "trial " << trial << " err " << err);
    }
  }

  TEST_CASE("trajectory objective is zero when the student sees the expert's data") {
    Rng rng(41);
    auto t = testing::random_labeled(4, 2, 2, rng).class_major();
    TrajectoryObjective obj(Mlp::init({2, 4, 2}, Activation::tanh, 3), t, TrainConfig{0.1, 3, 4, Loss::cross_entropy, 7});
    CHECK(obj.value(t.features(), t.labels()) == 0.0);
    CHECK(obj.value(t.features().array() + 0.05, t.labels()) > 0.0);
  }

  TEST_CASE("k-center fixture and bounds") {
    auto fixture = kcenter_covering(testing::column({0.0, 4.0, 10.0}), 1);
    CHECK(fixture.indices == std::vector<std::size_t>{1});
    CHECK(fixture.radius == 6.0);
    CHECK(fixture.exact);
    CHECK(kcenter_greedy(testing::column({0.0, 4.0, 10.0}), 3).radius == 0.0);
    CHECK(binomial(5, 2) == 10.0);
    CHECK(kind_of([] { kcenter_covering(testing::column({1.0}), 2); }) == ErrorKind::capacity);
    CHECK(kind_of([] { kcenter_covering(testing::column({1.0}), 0); }) == ErrorKind::capacity);

    Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = testing::uniform_int(rng, 3, 12);
      const int m = testing::uniform_int(rng, 1, std::min(3, n));
      MatrixXd t = testing::uniform_matrix(n, 2, rng);
      auto greedy = kcenter_greedy(t, m);
      auto exact = kcenter_exact(t, m);
      CHECK(greedy.indices.front() == 0);
      CHECK(greedy.radius <= 2.0 * exact.radius + 1e-12);
      CHECK(exact.radius <= greedy.radius + 1e-12);
      CHECK(exact.radius == doctest::Approx(covering_radius(t, exact.indices)));
      CHECK(kcenter_exact(t, n).radius == 0.0);
    }
  }

  TEST_CASE("k-means fixed points and monotone inertia") {
    Rng rng(61);
    MatrixXd t = testing::uniform_matrix(6, 2, rng);
    auto full = kmeans_coreset(t, 6, 10, 3);
    CHECK(full.inertia.back() <= 1e-24);
    std::set<std::pair<double, double>> pts, centers;
    for (int i = 0; i < 6; ++i) {
      pts.insert({t(i, 0), t(i, 1)});
      centers.insert({full.centers(i, 0), full.centers(i, 1)});
    }
    CHECK(pts == centers);

    MatrixXd pairs(4, 2);
    pairs << 0, 0, 0, 1, 10, 0, 10, 1;
    auto two = kmeans_coreset(pairs, 2, 20, 5);
    std::set<std::pair<double, double>> mids;
    for (int i = 0; i < 2; ++i) mids.insert({two.centers(i, 0), two.centers(i, 1)});
    CHECK(mids == std::set<std::pair<double, double>>{{0.0, 0.5}, {10.0, 0.5}});

    for (int trial = 0; trial < 20; ++trial) {
      MatrixXd x = testing::gaussian_matrix(30, 2, rng);
      auto r = kmeans_coreset(x, 4, 15, trial);
      for (std::size_t i = 1; i < r.inertia.size(); ++i) CHECK(r.inertia[i] <= r.inertia[i - 1] + 1e-12);
    }
    CHECK(kind_of([&] { kmeans_coreset(pairs, 5, 3, 1); }) == ErrorKind::capacity);
  }

  TEST_CASE("regularizer examples") {
    std::vector<Mlp> id{linear_model(2, 2)};
    MatrixXd s(2, 2);
    s << 0, 0, 3, 4;
    Labels sl{0, 1};
    RegularizerContext ctx;
    ctx.models = &id;
    ctx.s = &s;
    ctx.s_labels = &sl;
    ctx.class_count = 2;
    CHECK(regularizer_eval({RegularizerId::inter, 1.0, 2.0}, ctx) == 0.0);
    CHECK(regularizer_eval({RegularizerId::inter, 1.0, 7.0}, ctx) == doctest::Approx(4.0));

    Rng trng(3);
    LabeledDataset t(testing::uniform_matrix(4, 2, trng), {0, 1, 0, 1}, 2);
    MatrixXd one = t.features().row(2);
    RegularizerContext rep;
    rep.s = &one;
    rep.t = &t;
    CHECK(regularizer_eval({RegularizerId::rep, 1.0, 1.0}, rep) == doctest::Approx(-1.0).epsilon(1e-12));

    MatrixXd dup(2, 3);
    dup << 0.2, 0.5, 0.1, 0.2, 0.5, 0.1;
    RegularizerContext div;
    div.s = &dup;
    CHECK(regularizer_eval({RegularizerId::div, 1.0, 1.0}, div) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(VectorXd::Zero(3), VectorXd::Ones(3)) == 0.0);

    Rng rng(71);
    Trajectory traj;
    for (int k = 0; k < 3; ++k) traj.snapshots.push_back(testing::gaussian_matrix(6, 1, rng).col(0));
    VectorXd inside = 0.5 * traj.snapshots[0] - 2.0 * traj.snapshots[2];
    RegularizerContext proj;
    proj.trajectory = &traj;
    proj.theta = &inside;
    CHECK(regularizer_eval({RegularizerId::proj, 1.0, 1.0}, proj) <= 1e-9);
    VectorXd outside = inside + VectorXd::Unit(6, 1);
    proj.theta = &outside;
    MatrixXd a(6, 3);
    for (int k = 0; k < 3; ++k) a.col(k) = traj.snapshots[static_cast<std::size_t>(k)];
    const VectorXd resid = outside - a * (a.transpose() * a).ldlt().solve(a.transpose() * outside);
    CHECK(regularizer_eval({RegularizerId::proj, 1.0, 1.0}, proj) == doctest::Approx(resid.lpNorm<1>()));

    CHECK(kind_of([&] { regularizer_eval({RegularizerId::con, 1.0, 1.0}, ctx); }) == ErrorKind::context);
    CHECK(kind_of([&] { regularizer_eval({RegularizerId::rep, 1.0, 1.0}, div); }) == ErrorKind::context);
    CHECK(kind_of([&] { regularizer_eval({RegularizerId::intra, 1.0, 1.0}, ctx); }) == ErrorKind::context);
  }

  TEST_CASE("intra and dis against hand-expanded formulas") {
    std::vector<Mlp> id{linear_model(2, 2)};
    MatrixXd s(3, 2);
    s << 1, 0, 0, 1, 0.5, 0.5;
    Labels sl{0, 0, 1};
    MatrixXd tx(2, 2);
    tx << 0.2, 0.4, 0.6, 0.0;
    LabeledDataset t(tx, {0, 1}, 2);
    RegularizerContext ctx;
    ctx.models = &id;
    ctx.s = &s;
    ctx.s_labels = &sl;
    ctx.class_count = 2;
    ctx.t = &t;

    const double tau = 0.5;
    auto lse = [](double a, double b) { return std::log(std::exp(a) + std::exp(b)); };
    const Eigen::RowVector2d c0(0.2, 0.4);
    const double a = s.row(0).dot(c0) / tau, b = s.row(1).dot(c0) / tau, ab = s.row(0).dot(s.row(1)) / tau;
    const double intra = (lse(a, ab) - a + lse(b, ab) - b + 0.0) / 3.0;  // a singleton row contributes 0
    CHECK(regularizer_eval({RegularizerId::intra, 1.0, tau}, ctx) == doctest::Approx(intra).epsilon(1e-12));

    const Eigen::RowVector2d p0 = (s.row(0) + s.row(1)) / 2, p1 = s.row(2);
    const double d0 = lse(tx.row(0).dot(p0), tx.row(0).dot(p1)) - tx.row(0).dot(p0);
    const double d1 = lse(tx.row(1).dot(p0), tx.row(1).dot(p1)) - tx.row(1).dot(p1);
    CHECK(regularizer_eval({RegularizerId::dis, 1.0, 1.0}, ctx) == doctest::Approx((d0 + d1) / 2).epsilon(1e-12));
  }

  TEST_CASE("gaussian mechanism calibration") {
    const double sigma = dp_noise_calibration(1.0, 1e-5, 1.0);
    CHECK(sigma == doctest::Approx(std::sqrt(2.0 * std::log(1.25e5))).epsilon(1e-14));
    CHECK(std::abs(sigma - 4.84481) < 1e-5);
    CHECK(dp_noise_calibration(2.0, 1e-5, 1.0) == doctest::Approx(sigma / 2).epsilon(1e-14));
    CHECK(dp_noise_calibration(1.0, 1e-5, 3.0) == doctest::Approx(3 * sigma).epsilon(1e-14));
    CHECK(kind_of([] { dp_noise_calibration(0.0, 1e-5, 1.0); }) == ErrorKind::domain);
    CHECK(kind_of([] { dp_noise_calibration(1.0, 1.0, 1.0); }) == ErrorKind::domain);
    CHECK(kind_of([] { dp_noise_calibration(1.0, 1e-5, 0.0); }) == ErrorKind::domain);

    Rng a(5), b(5);
    VectorXd v = VectorXd::LinSpaced(4, 1, 4);
    CHECK(add_gaussian_noise(v, 0.0, a) == v);
    CHECK(a() == b());
    CHECK(clip_to_norm(v, 1.0).norm() == doctest::Approx(1.0));
    CHECK(clip_to_norm(v, 100.0) == v);
  }

  TEST_CASE("gradient matching from an exact copy stays put") {
    Rng rng(81);
    auto t = testing::random_labeled(3, 2, 2, rng).class_major();
    SyntheticDataset s0(t.features(), 2, 3, "copy");
    for (const char* opt : {"adam", "sgd"}) {
      auto c = small_config(Method::gm, 1);
      c.optimizer = opt;
      auto r = condense(c, t, s0);
      CHECK(r.log.steps[0].objective == 0.0);
      CHECK(r.log.steps[0].grad_norm == 0.0);
      CHECK(r.s.features() == s0.features());
    }
  }

  TEST_CASE("kernel matching moves a single point to the class mean") {
    Rng rng(91);
    std::normal_distribution<double> g(0.5, 0.1);
    MatrixXd x(200, 1);
    for (int i = 0; i < 200; ++i) x(i, 0) = std::clamp(g(rng), 0.0, 1.0);
    LabeledDataset t(x, Labels(200, 0), 1);
    auto c = small_config(Method::mmd, 400);
    c.kernel.scale = 0.1;
    c.learning_rate = 0.01;
    auto r = condense(c, t, SyntheticDataset(testing::column({0.1}), 1, 1, "manual"));
    const double found = r.s.features()(0, 0);

    auto k = KernelSpec::gaussian(0.1);
    double best = 0.0, best_value = 1e300;
    for (int i = 0; i <= 10000; ++i) {
      const double v = mmd_squared(k, x, testing::column({i / 10000.0}));
      if (v < best_value) best_value = v, best = i / 10000.0;
    }
    CHECK(std::abs(found - best) <= 1e-2);
    CHECK(std::abs(found - x.mean()) <= 1e-2);
  }

  TEST_CASE("degeneracy: zero-noise privacy reproduces the plain runs") {
    auto d = toy(101);
    auto plain_gm = condense(small_config(Method::gm), d.t, d.s0);
    auto c = small_config(Method::gm);
    c.variants.dp_grad = 0.0;
    auto private_gm = condense(c, d.t, d.s0);
    CHECK(objectives(private_gm) == objectives(plain_gm));
    CHECK(private_gm.s.features() == plain_gm.s.features());
    CHECK(private_gm.log.privacy.invocations > 0);

    auto rf = small_config(Method::mmd);
    rf.kernel.family = "random_feature";
    rf.kernel.feature_dim = 64;
    auto plain_mmd = condense(rf, d.t, d.s0);
    auto merf = rf;
    merf.method = Method::dm;
    merf.variants.dp_merf = 0.0;
    auto private_dm = condense(merf, d.t, d.s0);
    CHECK(objectives(private_dm) == objectives(plain_mmd));
    CHECK(private_dm.s.features() == plain_mmd.s.features());

    merf.variants.dp_merf = 0.5;
    CHECK(objectives(condense(merf, d.t, d.s0)) != objectives(plain_mmd));
  }

  TEST_CASE("degeneracy: zero-radius robustness reproduces the plain runs") {
    auto d = toy(111);
    auto bptt = small_config(Method::bptt, 3);
    auto plain = condense(bptt, d.t, d.s0);
    bptt.variants.robust_outer = RobustOuter{0.0, 3};
    auto robust = condense(bptt, d.t, d.s0);
    CHECK(objectives(robust) == objectives(plain));
    CHECK(robust.s.features() == plain.s.features());
    CHECK(*robust.inner_lr == *plain.inner_lr);

    auto krr = small_config(Method::krr);
    auto plain_krr = condense(krr, d.t, d.s0);
    krr.variants.ridge_robust = RobustOuter{0.0, 3};
    auto robust_krr = condense(krr, d.t, d.s0);
    CHECK(objectives(robust_krr) == objectives(plain_krr));
    CHECK(robust_krr.s.features() == plain_krr.s.features());
  }

  TEST_CASE("degeneracy: contrastive matching with one class equals per-class matching") {
    auto d = toy(121, 1, 3);
    auto c = small_config(Method::gm);
    auto per_class = condense(c, d.t, d.s0);
    c.variants.contrastive = true;
    auto contrastive = condense(c, d.t, d.s0);
    CHECK(objectives(contrastive) == objectives(per_class));
    CHECK(contrastive.s.features() == per_class.s.features());
  }

  TEST_CASE("every outer-loop method runs and logs one row per step") {
    auto d = toy(131);
    for (Method m : {Method::dm, Method::gm, Method::mmd, Method::moment, Method::sam, Method::krr,
                     Method::trajectory, Method::bptt, Method::cig_ridge}) {
      auto c = small_config(m, 4);
      auto r = condense(c, d.t, d.s0);
      CHECK_MESSAGE(r.log.steps.size() == 4u, to_string(m));
      CHECK(r.s.size() == d.s0.size());
      CHECK(r.s.labels() == d.s0.labels());
      CHECK(r.s.features().minCoeff() >= 0.0);
      CHECK(r.s.features().maxCoeff() <= 1.0);
      CHECK(r.log.refreshes == 2);
      CHECK(r.log.nonincreasing_fraction() >= 0.0);
      CHECK(r.log.nonincreasing_fraction() <= 1.0);
    }
  }

  TEST_CASE("regularized objective and its CSV log") {
    auto d = toy(141);
    auto c = small_config(Method::dm, 3);
    c.regularizers = {{RegularizerId::div, 0.5, 1.0}, {RegularizerId::inter, 0.25, 2.0}};
    auto r = condense(c, d.t, d.s0);
    for (const auto& s : r.log.steps) {
      REQUIRE(s.regularizers.size() == 2);
      CHECK(s.objective == doctest::Approx(s.method_loss + 0.5 * s.regularizers[0] + 0.25 * s.regularizers[1]));
    }
    const std::string csv = r.log.csv();
    CHECK(csv.rfind("step,objective,method_loss,reg_div,reg_inter,grad_norm\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  }

  TEST_CASE("coreset methods through condense") {
    auto d = toy(151, 2, 6);
    auto c = small_config(Method::kcenter);
    auto r = condense(c, d.t, d.s0);
    CHECK(r.s.features() == d.t.class_major().features());
    REQUIRE(r.covers.size() == 2);
    for (const auto& cover : r.covers) CHECK(cover.radius == 0.0);

    auto k = toy(152, 2, 2);
    auto km = condense(small_config(Method::kmeans), k.t, k.s0);
    CHECK(km.s.size() == 4);
    CHECK(km.s.labels() == k.s0.labels());
  }

  TEST_CASE("invalid configurations are rejected before any work") {
    auto d = toy(161);
    auto c = small_config(Method::dm);
    c.variants.contrastive = true;
    CHECK(kind_of([&] { condense(c, d.t, d.s0); }) == ErrorKind::config);
    Rng rng(1);
    auto mismatch = init_synthetic(testing::random_labeled(3, 3, 3, rng), 1, InitMode::subsample, 2);
    CHECK(kind_of([&] { condense(small_config(Method::dm), d.t, mismatch); }) == ErrorKind::config);
  }
}
