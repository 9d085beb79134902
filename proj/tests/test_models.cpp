#include "dcond/error.hpp"
#include "dcond/mlp.hpp"
#include "dcond/util.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace dcond;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Labels random_labels(int n, int classes, Rng& rng) {
  Labels y;
  for (int i = 0; i < n; ++i) y.push_back(testing::uniform_int(rng, 0, classes - 1));
  return y;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("forward pass fixtures") {
    Mlp zero = Mlp::init({3, 4, 2}, Activation::relu, 1);
    std::vector<DenseLayer> layers = zero.layers();
    for (auto& l : layers) l.weight.setZero();
    layers[1].bias << 0.25, -0.5;
    Mlp z({3, 4, 2}, Activation::relu, layers);
    VectorXd x(3);
    x << 0.1, 0.2, 0.3;
    auto out = forward_with_features(z, x);
    CHECK(out.logits(0) == 0.25);
    CHECK(out.logits(1) == -0.5);
    CHECK(out.features.size() == 2);

    // all-negative pre-activations under relu
    layers = zero.layers();
    layers[0].weight.setConstant(-1.0);
    layers[0].bias.setZero();
    auto neg = forward_with_features(Mlp({3, 4, 2}, Activation::relu, layers), x);
    CHECK(neg.features[0].isZero(0));

    // 1-2-1 tanh by hand
    DenseLayer l1{MatrixXd(2, 1), VectorXd(2)}, l2{MatrixXd(1, 2), VectorXd(1)};
    l1.weight << 0.5, -1.0;
    l1.bias << 0.1, 0.2;
    l2.weight << 2.0, -3.0;
    l2.bias << 0.5;
    Mlp hand({1, 2, 1}, Activation::tanh, {l1, l2});
    VectorXd xi(1);
    xi << 0.3;
    const double expect = 2 * std::tanh(0.25) - 3 * std::tanh(-0.1) + 0.5;
    CHECK(std::abs(forward_with_features(hand, xi).logits(0) - expect) <= 1e-12);
  }

  TEST_CASE("parameter and input gradients match central differences") {
    Rng rng(17);
    int cases = 0;
    for (int rep = 0; rep < 24; ++rep) {
      const int n = testing::uniform_int(rng, 1, 4), h = testing::uniform_int(rng, 2, 6), c = testing::uniform_int(rng, 2, 3);
      const int b = testing::uniform_int(rng, 1, 5);
      const Loss loss = rep % 2 ? Loss::mse : Loss::cross_entropy;
      // tanh keeps the loss smooth so the difference quotient is exact to O(h^2)
      Mlp m = Mlp::init({n, h, h, c}, Activation::tanh, static_cast<std::uint64_t>(rep));
      MatrixXd x = testing::uniform_matrix(b, n, rng);
      Labels y = random_labels(b, c, rng);
      Gradients g = m.backward(x, y, loss);
      CHECK(g.loss == doctest::Approx(mean_loss(m, x, y, loss)).epsilon(1e-12));
      VectorXd theta = m.flat_params();
      MatrixXd fd_p = testing::numeric_gradient(
          [&](const MatrixXd& t) { return mean_loss(m.with_params(t.col(0)), x, y, loss); }, theta);
      MatrixXd fd_x = testing::numeric_gradient([&](const MatrixXd& xx) { return mean_loss(m, xx, y, loss); }, x);
      CHECK(relative_error(g.params, fd_p) <= 1e-5);
      CHECK(relative_error(g.inputs, fd_x) <= 1e-5);
      ++cases;
    }
    CHECK(cases >= 20);
  }

  TEST_CASE("duplicated rows leave the mean gradient unchanged") {
    Rng rng(2);
    Mlp m = Mlp::init({2, 4, 2}, Activation::relu, 3);
    MatrixXd x = testing::uniform_matrix(1, 2, rng), xx(2, 2);
    xx << x, x;
    auto g1 = m.backward(x, {1}, Loss::cross_entropy);
    auto g2 = m.backward(xx, {1, 1}, Loss::cross_entropy);
    CHECK((g1.params - g2.params).cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("feature vjp and directional input gradient") {
    Rng rng(4);
    Mlp m = Mlp::init({3, 5, 4, 2}, Activation::tanh, 8);
    MatrixXd x = testing::uniform_matrix(3, 3, rng);
    std::vector<MatrixXd> seeds{testing::gaussian_matrix(3, 5, rng), MatrixXd(), testing::gaussian_matrix(3, 2, rng)};
    auto f = [&](const MatrixXd& xx) {
      auto p = m.forward(xx);
      return (seeds[0].cwiseProduct(p.features[0])).sum() + (seeds[2].cwiseProduct(p.features[2])).sum();
    };
    CHECK(relative_error(m.feature_vjp(x, seeds), testing::numeric_gradient(f, x)) <= 1e-6);

    Labels y{0, 1, 1};
    VectorXd dir = testing::gaussian_matrix(m.param_count(), 1, rng);
    MatrixXd got = m.input_grad_directional(x, y, Loss::cross_entropy, dir);
    // sum over samples of <grad_theta l_i, dir> = N * <grad_theta mean loss, dir>
    auto g = [&](const MatrixXd& xx) {
      return static_cast<double>(xx.rows()) * m.backward(xx, y, Loss::cross_entropy).params.dot(dir);
    };
    CHECK(relative_error(got, testing::numeric_gradient(g, x)) <= 1e-5);
  }

  TEST_CASE("training is deterministic and separates blobs") {
    auto d = normalize_features(testing::two_blobs(400, 6.0, 3)).data;
    Mlp m0 = Mlp::init({2, 16, 2}, Activation::relu, 5);
    TrainConfig cfg{0.1, 50, 32, Loss::cross_entropy, 9};
    auto r1 = sgd_train(m0, d, cfg, true);
    auto r2 = sgd_train(m0, d, cfg);
    CHECK(r1.model.flat_params() == r2.model.flat_params());
    CHECK(accuracy(r1.model, d) >= 0.99);
    REQUIRE(r1.trajectory);
    CHECK(r1.trajectory->snapshots.size() == 51);
    CHECK(r1.trajectory->snapshots.front() == m0.flat_params());
    TrainConfig five = cfg;
    five.epochs = 5;
    CHECK(sgd_train(m0, d, five).model.flat_params() == r1.trajectory->snapshots[5]);
    TrainConfig none = cfg;
    none.epochs = 0;
    CHECK(sgd_train(m0, d, none).model.flat_params() == m0.flat_params());
  }

  TEST_CASE("divergence is reported") {
    MatrixXd x = MatrixXd::Constant(4, 2, 1e3);
    Mlp m = Mlp::init({2, 8, 2}, Activation::relu, 1);
    TrainConfig cfg{1e12, 50, 4, Loss::mse, 0};
    try {
      sgd_train(m, LabeledDataset(x, {0, 1, 0, 1}, 2), cfg);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::divergence);
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  TEST_CASE("pgd attack contracts") {
    Rng rng(6);
    Mlp m = Mlp::init({3, 8, 2}, Activation::relu, 2);
    for (int rep = 0; rep < 20; ++rep) {
      VectorXd x = testing::uniform_matrix(3, 1, rng);
      const int y = rep % 2;
      CHECK(pgd_attack(m, x, y, 0.0, 5, 0.01) == x);
      const double eps = 0.05 + 0.1 * (rep % 3);
      VectorXd adv = pgd_attack(m, x, y, eps, 10, eps / 4);
      CHECK((adv - x).cwiseAbs().maxCoeff() <= eps + 1e-15);
      CHECK(adv.minCoeff() >= 0.0);
      CHECK(adv.maxCoeff() <= 1.0);
      auto loss_at = [&](const VectorXd& v) { return mean_loss(m, v.transpose(), {y}, Loss::cross_entropy); };
      CHECK(loss_at(adv) >= loss_at(x));
      double prev = loss_at(x);
      for (int steps = 1; steps <= 6; ++steps) {
        const double l = loss_at(pgd_attack(m, x, y, eps, steps, eps / 4));
        CHECK(l >= prev);
        prev = l;
      }
    }
  }

  TEST_CASE("curvature estimate on quadratic hooks and a trained net") {
    VectorXd theta = VectorXd::LinSpaced(6, -1, 1);
    CHECK(std::abs(lambda_max_estimate([](const VectorXd& t) { return t; }, theta, 20, 1) - 1.0) <= 1e-6);
    const double a = 3.5;
    CHECK(std::abs(lambda_max_estimate([a](const VectorXd& t) { return VectorXd(a * t); }, theta, 20, 1) - a) <=
          1e-6 * a);

    auto d = normalize_features(testing::two_blobs(100, 3.0, 1)).data;
    Mlp m = sgd_train(Mlp::init({2, 6, 2}, Activation::tanh, 2), d, {0.1, 20, 16, Loss::cross_entropy, 0}).model;
    const double l1 = lambda_max_estimate(m, d, Loss::cross_entropy, 200, 1);
    const double l2 = lambda_max_estimate(m, d, Loss::cross_entropy, 200, 2);
    CHECK(std::abs(l1 - l2) <= 1e-3 * std::abs(l1));
  }

  TEST_CASE("checkpoint and trajectory serialization") {
    Mlp m = Mlp::init({2, 3, 2}, Activation::tanh, 4);
    Mlp back = parse_checkpoint(checkpoint_json(m));
    CHECK(back.flat_params() == m.flat_params());
    CHECK(back.same_architecture(m));
    Trajectory t{{m.flat_params(), 2 * m.flat_params()}};
    auto tb = parse_trajectory(trajectory_json(m, t));
    CHECK(tb.snapshots.size() == 2);
    CHECK(tb.snapshots[1] == t.snapshots[1]);
  }
}
