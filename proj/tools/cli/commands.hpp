#pragma once

#include <filesystem>
#include <vector>

#include "cli/config.hpp"

namespace srnn::cli {

/// Writes train/test dataset files (plus *_clean variants when sigma > 0)
/// into cfg.data_dir. Bit-identical for the same config.
void run_generate(const ExperimentConfig& cfg);

/// Trains per the config and writes checkpoint.bin and loss_history.csv
/// into cfg.out_dir.
void run_train(const ExperimentConfig& cfg);

struct EvalSummary {
  double error_mean = 0.0;
  double error_std = 0.0;
  double clean_error_mean = 0.0;  // vs the noiseless reference when available
  double clean_error_std = 0.0;
  bool has_clean = false;
  std::size_t n_samples = 0;
  std::size_t horizon = 0;
};

/// Rolls the trained model out with the test integrator over the test set and
/// writes eval_steps.csv, eval_samples.csv and eval_summary.csv into
/// cfg.out_dir. `checkpoint` may be empty for the simulation baseline.
EvalSummary run_evaluate(const ExperimentConfig& cfg,
                         const std::filesystem::path& checkpoint = {});

/// Merges eval_summary.csv rows from the given run directories into one
/// comparison table. Missing summaries are reported to stderr and skipped.
void run_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_csv);

}  // namespace srnn::cli
