#include "dcond/error.hpp"
#include "dcond/harness.hpp"
#include "dcond/plots.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <sys/wait.h>

using namespace dcond;
using Eigen::MatrixXd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;
}

// Small blobs file plus a quick config around it.
RunConfig quick_config(const fs::path& dir, const std::string& method_json) {
  const fs::path data = dir / "blobs.csv";
  if (!fs::exists(data)) save_dataset(data, testing::two_blobs(300, 6.0, 5));
  return parse_run_config(R"({"dataset": "blobs.csv", "per_class": 1, "method": )" + method_json + R"(,
    "evaluation": {"architectures": [[8]], "repeats": 2, "hypotheses": 2, "train": {"epochs": 40}},
    "seed": 3})",
                          dir);
}

int cli(const std::string& args) {
  const int status = std::system((std::string(DCOND_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli-harness") {
  TEST_CASE("run config parsing") {
    const auto dir = testing::scratch_dir("runcfg");
    auto c = parse_run_config(R"({"dataset": "d.csv", "per_class": 2, "method": {"method": "gm"},
                                  "regime": "latent_latent", "latent_dim": 2, "seed": 9})",
                              dir);
    CHECK(c.dataset == dir / "d.csv");
    CHECK(c.per_class == 2);
    CHECK(c.method.method == Method::gm);
    CHECK(c.regime == Regime::latent_latent);
    CHECK(c.seed == 9u);
    CHECK(run_config_json(parse_run_config(run_config_json(c), dir)) == run_config_json(c));

    for (const char* bad : {
             R"({"dataset": "d.csv", "method": {"method": "gm"}, "extra": 1})",
             R"({"dataset": "d.csv"})",
             R"({"dataset": "d.csv", "method": {"method": "gm"}, "regime": "latent_input"})",
             R"({"dataset": "d.csv", "method": {"method": "gm"}, "per_class": 0})",
             R"({"dataset": "d.csv", "method": {"method": "gm"}, "evaluation": {"repeats": 0}})",
             R"({"dataset": "d.csv", "method": {"method": "gm", "variants": {"dp_merf": 1}}})",
             "[1, 2",
         })
      CHECK_MESSAGE(kind_of([&] { parse_run_config(bad, dir); }) == ErrorKind::config, bad);
  }

  TEST_CASE("repeated runs write byte-identical artifacts") {
    const auto dir = testing::scratch_dir("determinism");
    auto cfg = quick_config(dir, R"({"method": "dm", "steps": 15, "hidden": [8]})");
    run_and_write(cfg, dir / "a");
    run_and_write(cfg, dir / "b");
    for (const char* f : {"synthetic.csv", "synthetic.csv.meta.json", "report.json", "steps.csv", "objective.svg",
                          "accuracy.svg", "objective.csv", "accuracy.csv"}) {
      REQUIRE_MESSAGE(fs::exists(dir / "a" / f), f);
      CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    }
    CHECK(fs::exists(dir / "a" / "timings.json"));
    CHECK(slurp(dir / "a" / "report.json").find("timings") == std::string::npos);

    cfg.seed = 4;
    run_and_write(cfg, dir / "c");
    CHECK(slurp(dir / "a" / "synthetic.csv") != slurp(dir / "c" / "synthetic.csv"));
  }

  TEST_CASE("a full k-center cover scores exactly like the full training split") {
    const auto dir = testing::scratch_dir("fullcover");
    auto cfg = quick_config(dir, R"({"method": "kcenter"})");
    cfg.per_class = 120;  // every training row of each class (150 per class, 0.8 split)
    auto r = run(cfg);
    CHECK(r.condensed.s.features() == r.train.class_major().features());
    for (const auto& a : r.report.architectures) CHECK(a.accuracies == a.baseline_accuracies);
    CHECK(r.report.summary.at("accuracy_gap") == 0.0);
    CHECK(r.report.discrepancy->values.at("gd") == 0.0);
  }

  TEST_CASE("discrepancy command on fixtures") {
    const auto dir = testing::scratch_dir("disc");
    save_dataset(dir / "t.csv", testing::two_blobs(20, 3.0, 1));
    auto same = discrepancy_command(dir / "t.csv", dir / "t.csv", {"mmd", "w1", "hausdorff"});
    CHECK(std::abs(same.values.at("mmd")) <= 1e-12);
    CHECK(same.values.at("w1") == 0.0);
    CHECK(same.values.at("hausdorff") == 0.0);

    spit(dir / "a.csv", "f0,f1,label\n0,0,0\n");
    spit(dir / "b.csv", "f0,f1,label\n3,0,0\n");
    auto dirac = discrepancy_command(dir / "a.csv", dir / "b.csv", {"w1", "hausdorff"});
    CHECK(dirac.values.at("w1") == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(dirac.values.at("hausdorff") == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(dirac.values.count("mmd") == 0);

    spit(dir / "c.csv", "f0,label\n1,0\n");
    CHECK(kind_of([&] { discrepancy_command(dir / "a.csv", dir / "c.csv", {"w1"}); }) == ErrorKind::shape);
  }

  TEST_CASE("evaluate command scores a stored synthetic set") {
    const auto dir = testing::scratch_dir("evalcmd");
    save_dataset(dir / "real.csv", testing::two_blobs(200, 6.0, 2));
    spit(dir / "syn.csv", "f0,f1,label\n0.3,0.5,0\n0.7,0.5,1\n");
    EvalConfig cfg;
    cfg.architectures = {{8}};
    cfg.repeats = 3;
    cfg.train.epochs = 30;
    auto r = evaluate_command(dir / "syn.csv", dir / "real.csv", cfg, 1);
    REQUIRE(r.architectures.size() == 1);
    CHECK(r.architectures[0].accuracies.size() == 3u);
    CHECK(r.architectures[0].widths == std::vector<int>{2, 8, 2});
    CHECK(r.to_json() == evaluate_command(dir / "syn.csv", dir / "real.csv", cfg, 1).to_json());
  }

  TEST_CASE("plots") {
    CHECK(series_from_step_csv("").empty());
    CHECK(series_from_step_csv("step,objective,method_loss,grad_norm\n").empty());
    const auto dir = testing::scratch_dir("plots");
    auto paths = emit_plots(R"({"architectures": []})", "step,objective,method_loss,grad_norm\n", dir);
    for (const auto& p : paths) CHECK(fs::exists(p));

    Series up{"up", {{0, 1}, {1, 2}, {2, 4}, {3, 8}}};
    auto px = polyline_coordinates(up, 0, 3, 1, 8, 540, 300);
    for (std::size_t i = 1; i < px.size(); ++i) {
      CHECK(px[i].first > px[i - 1].first);
      CHECK(px[i].second < px[i - 1].second);  // larger values sit higher on screen
    }
    CHECK(px.front().first == 0.0);
    CHECK(px.front().second == 300.0);
    CHECK(px.back().second == 0.0);
    CHECK(line_chart_svg("t", {up}) == line_chart_svg("t", {up}));
    CHECK(bar_chart_svg("b", {{"x", 0.5, 0.1}}) == bar_chart_svg("b", {{"x", 0.5, 0.1}}));

    auto series = series_from_step_csv("step,objective,method_loss,grad_norm\n0,3,3,1\n1,2,2,1\n");
    REQUIRE(!series.empty());
    CHECK(series[0].name == "objective");
    CHECK(series[0].points.size() == 2u);
  }

  TEST_CASE("a failed write leaves no partial artifacts") {
    const auto dir = testing::scratch_dir("cleanup");
    auto cfg = quick_config(dir, R"({"method": "dm", "steps": 2, "hidden": [8]})");
    fs::create_directories(dir / "out" / "report.json");  // a directory where a file must go
    CHECK_THROWS(run_and_write(cfg, dir / "out"));
    CHECK(!fs::exists(dir / "out" / "synthetic.csv"));
    CHECK(!fs::exists(dir / "out" / "steps.csv"));
    CHECK(fs::exists(dir / "out" / "report.json"));

    cfg.method.learning_rate = 1e300;
    cfg.method.optimizer = "sgd";
    cfg.method.clip = false;
    CHECK(kind_of([&] { run_and_write(cfg, dir / "fresh"); }) == ErrorKind::divergence);
    CHECK(!fs::exists(dir / "fresh"));
  }

  TEST_CASE("command line exit codes") {
    const auto dir = testing::scratch_dir("cli");
    save_dataset(dir / "blobs.csv", testing::two_blobs(200, 6.0, 5));
    const std::string d = dir.string();
    spit(dir / "ok.json", R"({"dataset": "blobs.csv", "method": {"method": "kmeans"},
      "evaluation": {"architectures": [[4]], "repeats": 1, "hypotheses": 1, "train": {"epochs": 5}}})");
    spit(dir / "diverge.json", R"({"dataset": "blobs.csv", "method": {"method": "dm", "steps": 4, "hidden": [4],
      "learning_rate": 1e300, "optimizer": "sgd", "clip": false},
      "evaluation": {"architectures": [[4]], "repeats": 1, "train": {"epochs": 5}}})");
    spit(dir / "bad.json", R"({"dataset": "blobs.csv", "method": {"method": "dm", "steps": -1}})");

    CHECK(cli("condense --config " + d + "/ok.json --out " + d + "/out") == 0);
    CHECK(fs::exists(dir / "out" / "report.json"));
    CHECK(cli("condense --config " + d + "/bad.json --out " + d + "/bad") == 2);
    CHECK(cli("condense --config " + d + "/missing.json --out " + d + "/missing") == 2);
    CHECK(cli("condense --config " + d + "/diverge.json --out " + d + "/div") == 3);
    CHECK(!fs::exists(dir / "div"));
    CHECK(cli("discrepancy --a " + d + "/blobs.csv --b " + d + "/out/synthetic.csv --metrics mmd,w1") == 0);
    CHECK(cli("discrepancy --a " + d + "/blobs.csv --b " + d + "/blobs.csv --metrics bogus") == 2);
    CHECK(cli("evaluate --synthetic " + d + "/out/synthetic.csv --real " + d + "/blobs.csv --repeats 1 --hidden 4 "
              "--epochs 5") == 0);
    CHECK(cli("plot --report " + d + "/out/report.json --steps " + d + "/out/steps.csv --out " + d + "/plots") == 0);
    CHECK(fs::exists(dir / "plots" / "objective.svg"));
    CHECK(cli("") == 2);
    CHECK(cli("condense --no-such-flag") == 2);
  }
}
