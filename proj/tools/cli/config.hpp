#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "srnn/training.hpp"

namespace srnn::cli {

enum class System : std::uint8_t { kSpringChain, kThreeBody, kBilliard };
enum class ModelChoice : std::uint8_t { kHnet, kOnet, kRnn, kSimulation };

const char* system_name(System s);
const char* model_choice_name(ModelChoice m);

/// One experiment: which system, which model, how to train and test it.
/// Every field is parseable from a plain-text `key = value` config file and
/// has a preset-derived default.
struct ExperimentConfig {
  System system = System::kSpringChain;
  ModelChoice model = ModelChoice::kHnet;
  training::Mode mode = training::Mode::kRecurrent;
  // kind: euler / leapfrog / rebound_leapfrog; "none" is stored for the RNN
  bool train_integrator_none = false;
  bool test_integrator_none = false;
  integrators::IntegratorKind train_integrator = integrators::IntegratorKind::kLeapfrog;
  integrators::IntegratorKind test_integrator = integrators::IntegratorKind::kLeapfrog;
  bool iso = false;

  double dt = 0.1;
  std::size_t window = 9;
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  training::SchedulerSpec scheduler;

  std::size_t iso_start_epoch = 100;
  std::size_t iso_every = 1;
  int iso_iters = 20;
  std::size_t iso_fit_steps = 10;

  double gamma_l1 = 0.0;
  bool rebound = false;
  bool rebound_fix_alpha = false;
  std::size_t rebound_shared_hidden = 128;
  std::size_t rebound_branch_hidden = 32;
  std::size_t rebound_gamma_hidden = 16;

  std::size_t hidden = 256;
  std::size_t hidden_layers = 1;

  std::size_t n_train = 200;
  std::size_t n_test = 32;
  std::size_t train_len = 10;
  std::size_t test_len = 201;
  double sigma = 0.0;

  std::size_t eval_horizon = 100;
  std::uint64_t seed = 1;
  int threads = 1;
  bool export_csv = false;

  std::string preset = "desk";
  std::string out_dir = ".";
  std::string data_dir = ".";

  void validate() const;
};

/// Defaults for a (system, preset) pair. `paper` carries the full published
/// hyperparameters; `desk` is the reduced configuration used by CI and the
/// acceptance suite (smaller widths, fewer epochs, fewer trajectories).
ExperimentConfig preset_config(System system, const std::string& preset);

/// Parse `key = value` lines ('#' comments, blank lines ignored), layering:
/// file preset/system first, then every file key, then non-empty overrides.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::string& preset_override = "",
                             std::int64_t seed_override = -1,
                             const std::string& out_dir_override = "");

/// Apply a single key=value assignment (the file parser's workhorse).
void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

}  // namespace srnn::cli
