#include "dcond/discrepancy.hpp"
#include "dcond/error.hpp"
#include "dcond/transport.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

using namespace dcond;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Mlp identity_model(int n) {
  return Mlp({n, n}, Activation::relu, {DenseLayer{MatrixXd::Identity(n, n), VectorXd::Zero(n)}});
}

ModelBatch one(const Mlp& m) { return ModelBatch{{m}, ModelProvenance::random_init}; }

double brute_w1(const MatrixXd& t, const MatrixXd& s) {
  std::vector<int> p(static_cast<std::size_t>(t.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = 1e300;
  do {
    double c = 0;
    for (Eigen::Index i = 0; i < t.rows(); ++i) c += (t.row(i) - s.row(p[static_cast<std::size_t>(i)])).norm();
    best = std::min(best, c / static_cast<double>(t.rows()));
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

// Class-mean parameter gradients recomputed one sample at a time.
VectorXd class_mean_gradient(const Mlp& m, const LabeledDataset& d, int y) {
  VectorXd g = VectorXd::Zero(m.param_count());
  int count = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d.labels()[static_cast<std::size_t>(i)] == y) {
      g += m.backward(d.features().row(i), {y}, Loss::cross_entropy).params;
      ++count;
    }
  return g / count;
}

}  // namespace

TEST_SUITE("discrepancy") {
  TEST_CASE("feature statistic") {
    Rng rng(1);
    auto t = testing::random_labeled(4, 2, 2, rng);
    auto h = random_model_batch({2, 5, 3}, Activation::relu, 3, 2);
    CHECK(ipm_feature_stat(h, t, t) == 0.0);

    MatrixXd tx(2, 2), sx(1, 2);
    tx << -1, 0, 1, 0;
    sx << 1, 0;
    CHECK(ipm_feature_stat(one(identity_model(2)), LabeledDataset(tx, {0, 0}, 1), LabeledDataset(sx, {0}, 1)) ==
          doctest::Approx(1.0).epsilon(1e-15));

    auto s = testing::random_labeled(2, 2, 2, rng);
    double oracle = 0;
    for (const auto& m : h.models) {
      double v = 0;
      for (int y = 0; y < 2; ++y)
        v += (m.embedding(t.class_rows(y)).colwise().mean() - m.embedding(s.class_rows(y)).colwise().mean())
                 .squaredNorm();
      oracle = std::max(oracle, v);
    }
    CHECK(ipm_feature_stat(h, t, s) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK_THROWS_AS(ipm_feature_stat(h, t, testing::random_labeled(2, 3, 2, rng)), Error);
  }

  TEST_CASE("gradient discrepancy") {
    Rng rng(2);
    auto t = testing::random_labeled(5, 2, 3, rng);
    auto s = testing::random_labeled(2, 2, 3, rng);
    auto h = random_model_batch({3, 4, 2}, Activation::tanh, 1, 7);
    CHECK(gradient_discrepancy(h, t, t, GradientMode::per_class) == doctest::Approx(0).epsilon(1e-24));
    CHECK(gradient_discrepancy(h, t, t, GradientMode::contrastive) == doctest::Approx(0).epsilon(1e-24));
    const Mlp& m = h.models.front();
    double per = 0;
    VectorXd summed = VectorXd::Zero(m.param_count());
    for (int y = 0; y < 2; ++y) {
      VectorXd diff = class_mean_gradient(m, t, y) - class_mean_gradient(m, s, y);
      per += diff.squaredNorm();
      summed += diff;
    }
    CHECK(gradient_discrepancy(h, t, s, GradientMode::per_class) == doctest::Approx(per).epsilon(1e-10));
    CHECK(gradient_discrepancy(h, t, s, GradientMode::contrastive) ==
          doctest::Approx(summed.squaredNorm()).epsilon(1e-10));

    auto t1 = testing::random_labeled(5, 1, 3, rng), s1 = testing::random_labeled(2, 1, 3, rng);
    auto h1 = random_model_batch({3, 4, 1}, Activation::tanh, 2, 1);
    CHECK(gradient_discrepancy(h1, t1, s1, GradientMode::per_class, Loss::mse) ==
          gradient_discrepancy(h1, t1, s1, GradientMode::contrastive, Loss::mse));
  }

  TEST_CASE("moment discrepancy") {
    auto id = one(identity_model(1));
    auto t = LabeledDataset(testing::column({0, 2}), {0, 0}, 1);
    auto s = LabeledDataset(testing::column({1, 1}), {0, 0}, 1);
    CHECK(moment_discrepancy(id, t, s) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ipm_feature_stat(id, t, s) == 0.0);
    CHECK(moment_discrepancy(id, t, t) == 0.0);
  }

  TEST_CASE("wasserstein fixtures and brute force") {
    CHECK(wasserstein1(testing::column({0}), testing::column({3})) == doctest::Approx(3));
    CHECK(wasserstein1(testing::column({0, 2}), testing::column({1, 3})) == doctest::Approx(1));
    CHECK(wasserstein1(testing::column({0, 2, 5}), testing::column({5, 0, 2})) == 0.0);
    CHECK_THROWS_AS(wasserstein1(MatrixXd(0, 1), testing::column({1})), Error);
    Rng rng(3);
    for (int rep = 0; rep < 30; ++rep) {
      const int k = testing::uniform_int(rng, 1, 5);
      MatrixXd a = testing::uniform_matrix(k, 2, rng), b = testing::uniform_matrix(k, 2, rng);
      CHECK(std::abs(wasserstein1(a, b) - brute_w1(a, b)) <= 1e-9);
    }
    // Unequal sizes: replicating each point lcm/size times gives equal-size sets with the same measure.
    for (int rep = 0; rep < 10; ++rep) {
      MatrixXd a = testing::uniform_matrix(2, 2, rng), b = testing::uniform_matrix(3, 2, rng);
      MatrixXd a6(6, 2), b6(6, 2);
      for (int i = 0; i < 6; ++i) a6.row(i) = a.row(i % 2), b6.row(i) = b.row(i % 3);
      CHECK(std::abs(wasserstein1(a, b) - wasserstein1(a6, b6)) <= 1e-9);
    }
  }

  TEST_CASE("transport plans have uniform marginals") {
    Rng rng(8);
    MatrixXd c = testing::uniform_matrix(3, 5, rng);
    auto plan = solve_uniform_transport(c);
    CHECK((plan.flow.rowwise().sum().array() - 1.0 / 3).abs().maxCoeff() <= 1e-12);
    CHECK((plan.flow.colwise().sum().array() - 1.0 / 5).abs().maxCoeff() <= 1e-12);
    CHECK(plan.cost == doctest::Approx(plan.flow.cwiseProduct(c).sum()).epsilon(1e-12));
  }

  TEST_CASE("hausdorff") {
    CHECK(hausdorff_distance(testing::column({0, 4, 10}), testing::column({4})) == 6.0);
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
      MatrixXd a = testing::uniform_matrix(4, 3, rng), b = testing::uniform_matrix(2, 3, rng);
      CHECK(hausdorff_distance(a, b) == hausdorff_distance(b, a));
      CHECK(hausdorff_distance(a, a) == 0.0);
      CHECK(hausdorff_distance(a, b) > 0.0);
    }
  }

  TEST_CASE("characteristic discrepancy") {
    MatrixXd one_freq = MatrixXd::Ones(1, 1);
    CHECK(characteristic_discrepancy(testing::column({0}), testing::column({M_PI}), one_freq) ==
          doctest::Approx(2.0).epsilon(1e-12));
    Rng rng(6);
    MatrixXd f = sample_frequencies(2, 16, 3);
    CHECK_THROWS_AS(characteristic_discrepancy(testing::column({0}), testing::column({1}), MatrixXd(0, 1)), Error);
    for (int rep = 0; rep < 20; ++rep) {
      MatrixXd a = testing::uniform_matrix(3, 2, rng), b = testing::uniform_matrix(4, 2, rng),
               c = testing::uniform_matrix(2, 2, rng);
      const double ab = characteristic_discrepancy(a, b, f), ba = characteristic_discrepancy(b, a, f);
      CHECK(std::abs(ab - ba) <= 1e-12);
      CHECK(ab <= characteristic_discrepancy(a, c, f) + characteristic_discrepancy(c, b, f) + 1e-12);
      CHECK(ab <= 2.0);
      CHECK(characteristic_discrepancy(a, a, f) == 0.0);
      // direct complex-mean oracle
      double oracle = 0;
      for (Eigen::Index k = 0; k < f.rows(); ++k) {
        std::complex<double> fa = 0, fb = 0;
        for (Eigen::Index i = 0; i < a.rows(); ++i) fa += std::polar(1.0, a.row(i).dot(f.row(k)));
        for (Eigen::Index i = 0; i < b.rows(); ++i) fb += std::polar(1.0, b.row(i).dot(f.row(k)));
        oracle = std::max(oracle, std::abs(fa / 3.0 - fb / 4.0));
      }
      CHECK(std::abs(ab - oracle) <= 1e-12);
    }
  }

  TEST_CASE("generalization discrepancy on a finite class") {
    Rng rng(7);
    auto t = testing::random_labeled(6, 2, 2, rng);
    auto h = random_model_batch({2, 4, 2}, Activation::relu, 8, 3);
    auto pts = value_evaluation_sample(t.features(), 16, 1);
    auto same = generalization_discrepancy_finite(h, t, t, Loss::cross_entropy, pts, true);
    CHECK(same.gd == 0.0);
    CHECK(same.vd == 0.0);
    CHECK(*same.pd == 0.0);
    auto s = testing::random_labeled(1, 2, 2, rng);
    ModelBatch single{{h.models[0]}, ModelProvenance::random_init};
    CHECK(generalization_discrepancy_finite(single, t, s, Loss::cross_entropy, pts, false).gd == 0.0);
    auto g = generalization_discrepancy_finite(h, t, s, Loss::cross_entropy, pts, true);
    CHECK(g.gd <= 2 * max_loss_gap(h, t, s, Loss::cross_entropy) + 1e-9);
    // exhaustive oracle
    auto argmin = [&](const LabeledDataset& d) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < h.models.size(); ++i)
        if (mean_loss(h.models[i], d.features(), d.labels(), Loss::cross_entropy) <
            mean_loss(h.models[best], d.features(), d.labels(), Loss::cross_entropy))
          best = i;
      return best;
    };
    const auto it = argmin(t), is = argmin(s);
    CHECK(g.selected_on_t == it);
    CHECK(g.selected_on_s == is);
    CHECK(g.gd == doctest::Approx(std::abs(mean_loss(h.models[is], t.features(), t.labels(), Loss::cross_entropy) -
                                           mean_loss(h.models[it], t.features(), t.labels(), Loss::cross_entropy))));
    CHECK(*g.pd == doctest::Approx((h.models[it].flat_params() - h.models[is].flat_params()).norm()));

    ModelBatch mixed{{h.models[0], Mlp::init({2, 3, 2}, Activation::relu, 1)}, ModelProvenance::random_init};
    try {
      generalization_discrepancy_finite(mixed, t, s, Loss::cross_entropy, pts, true);
      FAIL("expected an architecture error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::architecture);
    }
  }

  TEST_CASE("hierarchy report") {
    Rng rng(9);
    auto t = testing::random_labeled(5, 2, 2, rng);
    auto h = random_model_batch({2, 4, 2}, Activation::tanh, 4, 1);
    auto same = hierarchy_report(t, t, h);
    for (const auto& [name, v] : same.values) CHECK_MESSAGE(std::abs(v) <= 1e-12, name);
    for (const auto& c : same.checks) CHECK(c.satisfied);

    auto s = testing::random_labeled(2, 2, 2, rng);
    auto r = hierarchy_report(t, s, h);
    for (const char* key : {"dd_feature", "dd_gradient", "dd_moment", "mmd", "w1", "hausdorff", "cd", "gd", "vd", "pd"})
      CHECK_MESSAGE(r.values.count(key) == 1, key);
    for (const auto& [name, v] : r.values) CHECK(v >= 0.0);
    for (const auto& c : r.checks) CHECK(c.satisfied == (c.lhs <= c.rhs + 1e-9));
    auto back = DiscrepancyReport::from_json(r.to_json());
    CHECK(back.values == r.values);
    CHECK(back.hyperparameters == r.hyperparameters);
    CHECK(back.checks.size() == r.checks.size());
    CHECK(back.to_json() == r.to_json());
  }

  TEST_CASE("point-set report selects metrics") {
    auto t = LabeledDataset(testing::column({0}), {0}, 1);
    auto s = LabeledDataset(testing::column({3}), {0}, 1);
    auto r = point_set_report(t, s, {"w1"});
    CHECK(r.values.size() == 1);
    CHECK(r.values.at("w1") == doctest::Approx(3));
    CHECK_THROWS_AS(point_set_report(t, s, {"nope"}), Error);
  }
}
