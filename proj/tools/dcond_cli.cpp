// Command-line front end: condense, discrepancy, evaluate, plot.
#include "dcond/error.hpp"
#include "dcond/harness.hpp"
#include "dcond/plots.hpp"
#include "dcond/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <sstream>

namespace {

using dcond::ErrorKind;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::divergence:
    case ErrorKind::numerical:
    case ErrorKind::linear_algebra:
    case ErrorKind::domain:
      return 3;
    default:
      return 2;  // bad config, inputs or files
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dataset condensation toolkit"};
  app.require_subcommand(1);

  // condense
  auto* cond = app.add_subcommand("condense", "condense a dataset and evaluate the result");
  std::string config_path, out_dir, dataset, regime;
  std::uint64_t seed = 0;
  int per_class = 0, repeats = 0, latent_dim = 0;
  cond->add_option("--config", config_path, "run config (JSON)")->required();
  cond->add_option("--out", out_dir, "output directory");
  cond->add_option("--dataset", dataset, "dataset CSV (overrides the config)");
  cond->add_option("--seed", seed, "global seed (overrides the config)");
  cond->add_option("--per-class", per_class, "synthetic points per class (overrides the config)");
  cond->add_option("--repeats", repeats, "evaluation repeats (overrides the config)");
  cond->add_option("--regime", regime, "input_input, input_latent, latent_input or latent_latent");
  cond->add_option("--latent-dim", latent_dim, "autoencoder latent dimension");

  // discrepancy
  auto* disc = app.add_subcommand("discrepancy", "point-set discrepancies between two datasets");
  std::string path_a, path_b, metrics = "mmd,w1,hausdorff", disc_out;
  std::uint64_t disc_seed = 0;
  disc->add_option("--a", path_a, "first dataset CSV")->required();
  disc->add_option("--b", path_b, "second dataset CSV")->required();
  disc->add_option("--metrics", metrics, "comma-separated subset of mmd,w1,hausdorff,cd");
  disc->add_option("--out", disc_out, "also write the report JSON here");
  disc->add_option("--seed", disc_seed, "seed for random frequencies");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "train on a synthetic set, test on held-out real data");
  std::string syn_path, real_path, eval_out, hidden = "64,64", activation = "relu";
  dcond::EvalConfig ecfg;
  std::uint64_t eval_seed = 0;
  double eps = -1.0;
  eval->add_option("--synthetic", syn_path, "synthetic CSV")->required();
  eval->add_option("--real", real_path, "real CSV")->required();
  eval->add_option("--repeats", ecfg.repeats, "training repeats per architecture");
  eval->add_option("--hidden", hidden, "hidden widths, e.g. 64,64");
  eval->add_option("--activation", activation, "relu or tanh");
  eval->add_option("--epochs", ecfg.train.epochs, "training epochs");
  eval->add_option("--lr", ecfg.train.learning_rate, "learning rate");
  eval->add_option("--batch-size", ecfg.train.batch_size, "minibatch size");
  eval->add_option("--pgd-eps", eps, "also report accuracy under an l_inf PGD attack of this radius");
  eval->add_option("--seed", eval_seed, "seed");
  eval->add_option("--out", eval_out, "also write the report JSON here");

  // plot
  auto* plot = app.add_subcommand("plot", "render objective and accuracy plots");
  std::string report_path, steps_path, plot_out;
  plot->add_option("--report", report_path, "report.json")->required();
  plot->add_option("--steps", steps_path, "steps.csv (empty log when omitted)");
  plot->add_option("--out", plot_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cond) {
      // Explicit flags win over the config file.
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(dcond::read_text_file(config_path));
      } catch (const nlohmann::json::exception& e) {
        dcond::fail(ErrorKind::config, std::string("run config: ") + e.what());
      } catch (const dcond::Error& e) {
        dcond::fail(ErrorKind::config, e.what());
      }
      if (!dataset.empty()) j["dataset"] = std::filesystem::absolute(dataset).string();
      if (cond->count("--seed")) j["seed"] = seed;
      if (per_class > 0) j["per_class"] = per_class;
      if (repeats > 0) j["evaluation"]["repeats"] = repeats;
      if (!regime.empty()) j["regime"] = regime;
      if (latent_dim > 0) j["latent_dim"] = latent_dim;
      auto cfg = dcond::parse_run_config(j.dump(), std::filesystem::path(config_path).parent_path());
      std::filesystem::path out = !out_dir.empty() ? std::filesystem::path(out_dir)
                                  : cfg.output     ? *cfg.output
                                                   : std::filesystem::path("condense_out");
      auto r = dcond::run_and_write(cfg, out);
      std::cout << "condensed " << r.condensed.s.size() << " points; accuracy "
                << dcond::format_double(r.report.summary.at("condensed_accuracy")) << " (full data "
                << dcond::format_double(r.report.summary.at("baseline_accuracy")) << "); wrote " << out.string()
                << "\n";
    } else if (*disc) {
      auto r = dcond::discrepancy_command(path_a, path_b, split_commas(metrics), disc_seed);
      const std::string text = r.to_json();
      if (!disc_out.empty()) dcond::write_text_file(disc_out, text);
      std::cout << text;
    } else if (*eval) {
      ecfg.architectures.clear();
      std::vector<int> widths;
      for (const auto& w : split_commas(hidden)) {
        try {
          widths.push_back(std::stoi(w));
        } catch (const std::logic_error&) {
          dcond::fail(ErrorKind::config, "bad hidden width '" + w + "'");
        }
      }
      ecfg.architectures.push_back(widths);
      ecfg.activation = dcond::parse_activation(activation);
      if (eps >= 0.0) ecfg.robustness = dcond::RobustnessConfig{eps, 10};
      dcond::require(ecfg.repeats >= 1, ErrorKind::config, "--repeats must be >= 1");
      auto r = dcond::evaluate_command(syn_path, real_path, ecfg, eval_seed);
      const std::string text = r.to_json();
      if (!eval_out.empty()) dcond::write_text_file(eval_out, text);
      std::cout << text;
    } else if (*plot) {
      const std::string report = dcond::read_text_file(report_path);
      const std::string steps = steps_path.empty() ? std::string() : dcond::read_text_file(steps_path);
      for (const auto& p : dcond::emit_plots(report, steps, plot_out)) std::cout << p.string() << "\n";
    }
  } catch (const dcond::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
