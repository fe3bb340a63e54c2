#include <CLI11.hpp>

#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"srnn: symplectic recurrent network experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string preset;
  std::int64_t seed = -1;
  std::string out_dir;
  std::string checkpoint;
  std::string report_out = "report.csv";
  std::vector<std::string> report_dirs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file (key = value lines)");
    cmd->add_option("--preset", preset, "preset defaults: paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--seed", seed, "override the experiment seed");
    cmd->add_option("--out-dir", out_dir, "override the output directory");
  };

  CLI::App* generate = app.add_subcommand("generate", "write train/test dataset files");
  add_common(generate);
  CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train);
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "roll out a checkpoint over the test set");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint path (default: out_dir)");
  CLI::App* report = app.add_subcommand("report", "merge run summaries into one table");
  report->add_option("--out", report_out, "output CSV path");
  report->add_option("dirs", report_dirs, "run directories holding eval_summary.csv")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed() || train->parsed() || evaluate->parsed()) {
      const srnn::cli::ExperimentConfig cfg =
          srnn::cli::load_config(config_path, preset, seed, out_dir);
      if (generate->parsed()) {
        srnn::cli::run_generate(cfg);
      } else if (train->parsed()) {
        srnn::cli::run_train(cfg);
      } else {
        const srnn::cli::EvalSummary s = srnn::cli::run_evaluate(cfg, checkpoint);
        std::cout << "error_mean=" << s.error_mean << " error_std=" << s.error_std
                  << " n=" << s.n_samples << " horizon=" << s.horizon << "\n";
      }
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      srnn::cli::run_report(dirs, report_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
