#include "cli/config.hpp"

#include <fstream>
#include <map>

namespace srnn::cli {

using integrators::IntegratorKind;
using training::Mode;
using training::SchedulerKind;

const char* system_name(System s) {
  switch (s) {
    case System::kSpringChain: return "spring_chain";
    case System::kThreeBody: return "three_body";
    case System::kBilliard: return "billiard";
  }
  return "?";
}

const char* model_choice_name(ModelChoice m) {
  switch (m) {
    case ModelChoice::kHnet: return "hnet";
    case ModelChoice::kOnet: return "onet";
    case ModelChoice::kRnn: return "rnn";
    case ModelChoice::kSimulation: return "simulation";
  }
  return "?";
}

namespace {

System system_from(const std::string& s) {
  if (s == "spring_chain") return System::kSpringChain;
  if (s == "three_body") return System::kThreeBody;
  if (s == "billiard") return System::kBilliard;
  fail("unknown system: " + s);
}

ModelChoice model_from(const std::string& s) {
  if (s == "hnet") return ModelChoice::kHnet;
  if (s == "onet") return ModelChoice::kOnet;
  if (s == "rnn") return ModelChoice::kRnn;
  if (s == "simulation") return ModelChoice::kSimulation;
  fail("unknown model: " + s);
}

IntegratorKind integrator_from(const std::string& s) {
  if (s == "euler") return IntegratorKind::kEuler;
  if (s == "leapfrog") return IntegratorKind::kLeapfrog;
  if (s == "rebound_leapfrog") return IntegratorKind::kReboundLeapfrog;
  fail("unknown integrator: " + s);
}

bool bool_from(const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  fail("expected a boolean, got: " + s);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void ExperimentConfig::validate() const {
  const bool is_rnn = model == ModelChoice::kRnn;
  if (is_rnn && (!train_integrator_none || !test_integrator_none)) {
    fail("config: the rnn model takes no integrators; set them to 'none'");
  }
  if (!is_rnn && model != ModelChoice::kSimulation &&
      (train_integrator_none || test_integrator_none)) {
    fail("config: integrator 'none' is only valid for the rnn model");
  }
  if (rebound && model != ModelChoice::kHnet) {
    fail("config: the rebound module attaches to hnet models only");
  }
  const bool uses_rebound_integrator =
      (!train_integrator_none && train_integrator == IntegratorKind::kReboundLeapfrog) ||
      (!test_integrator_none && test_integrator == IntegratorKind::kReboundLeapfrog);
  if (uses_rebound_integrator && !rebound) {
    fail("config: rebound_leapfrog requires rebound = 1");
  }
  if (rebound && system != System::kBilliard) {
    fail("config: the rebound module is specific to the billiard system");
  }
  if (mode == Mode::kSingleStep && iso) {
    fail("config: iso applies to recurrent training only");
  }
  if (dt <= 0.0) fail("config: dt must be positive");
  if (test_len < eval_horizon + 1) {
    fail("config: test_len must cover eval_horizon + 1 states");
  }
}

ExperimentConfig preset_config(System system, const std::string& preset) {
  const bool paper = preset == "paper";
  if (!paper && preset != "desk") fail("unknown preset: " + preset);

  ExperimentConfig c;
  c.system = system;
  c.preset = preset;
  switch (system) {
    case System::kSpringChain:
      c.dt = 0.1;
      c.window = 9;
      c.hidden = paper ? 2048 : 256;
      c.hidden_layers = 1;
      c.epochs = paper ? 1000 : 200;
      c.lr = 1e-3;
      c.scheduler.kind = SchedulerKind::kPlateau;
      c.scheduler.patience = 15;
      c.scheduler.factor = 0.7;
      c.batch_size = paper ? 256 : 32;
      c.n_train = paper ? 1000 : 200;
      c.n_test = 32;
      c.train_len = 10;
      c.test_len = 201;
      c.sigma = 0.1;
      c.eval_horizon = 200;
      c.iso_start_epoch = 100;
      c.iso_every = paper ? 1 : 2;
      c.iso_iters = paper ? 20 : 4;
      break;
    case System::kThreeBody:
      c.dt = 1.0;
      c.window = 4;
      c.hidden = paper ? 512 : 64;
      c.hidden_layers = 3;
      c.epochs = paper ? 1000 : 200;
      c.lr = paper ? 3e-4 : 1e-3;
      c.scheduler.kind = SchedulerKind::kPlateau;
      c.scheduler.patience = 15;
      c.scheduler.factor = 0.7;
      c.batch_size = paper ? 256 : 64;
      c.n_train = 100;
      c.n_test = 32;
      c.train_len = 10;
      c.test_len = 21;
      c.sigma = 0.0;
      c.eval_horizon = 20;
      c.iso_start_epoch = 100;
      c.iso_every = paper ? 1 : 2;
      c.iso_iters = paper ? 20 : 4;
      break;
    case System::kBilliard:
      c.dt = 0.1;
      c.window = 9;
      c.hidden = 32;  // the billiard nets are tiny at paper scale already
      c.hidden_layers = 1;
      c.epochs = paper ? 1500 : 300;
      c.lr = 5e-3;
      c.scheduler.kind = SchedulerKind::kExponential;
      c.scheduler.decay = 0.99;
      c.scheduler.min_lr = 1e-4;
      c.batch_size = 64;
      c.n_train = paper ? 5000 : 600;
      c.n_test = 32;
      c.train_len = 10;
      c.test_len = 60;
      c.sigma = 0.0;
      c.eval_horizon = 59;
      c.rebound = true;
      c.train_integrator = IntegratorKind::kReboundLeapfrog;
      c.test_integrator = IntegratorKind::kReboundLeapfrog;
      c.gamma_l1 = 0.01;
      c.rebound_shared_hidden = paper ? 128 : 64;
      c.rebound_branch_hidden = paper ? 32 : 16;
      c.rebound_gamma_hidden = paper ? 16 : 8;
      break;
  }
  return c;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "system") cfg.system = system_from(value);
  else if (key == "preset") cfg.preset = value;
  else if (key == "model") cfg.model = model_from(value);
  else if (key == "mode") {
    if (value == "single_step") cfg.mode = Mode::kSingleStep;
    else if (value == "recurrent") cfg.mode = Mode::kRecurrent;
    else fail("unknown mode: " + value);
  } else if (key == "train_integrator") {
    cfg.train_integrator_none = value == "none";
    if (!cfg.train_integrator_none) cfg.train_integrator = integrator_from(value);
  } else if (key == "test_integrator") {
    cfg.test_integrator_none = value == "none";
    if (!cfg.test_integrator_none) cfg.test_integrator = integrator_from(value);
  } else if (key == "iso") cfg.iso = bool_from(value);
  else if (key == "dt") cfg.dt = std::stod(value);
  else if (key == "window") cfg.window = std::stoul(value);
  else if (key == "epochs") cfg.epochs = std::stoul(value);
  else if (key == "batch_size") cfg.batch_size = std::stoul(value);
  else if (key == "lr") cfg.lr = std::stod(value);
  else if (key == "scheduler") {
    if (value == "none") cfg.scheduler.kind = SchedulerKind::kNone;
    else if (value == "plateau") cfg.scheduler.kind = SchedulerKind::kPlateau;
    else if (value == "exponential") cfg.scheduler.kind = SchedulerKind::kExponential;
    else fail("unknown scheduler: " + value);
  } else if (key == "scheduler_patience") cfg.scheduler.patience = std::stoi(value);
  else if (key == "scheduler_factor") cfg.scheduler.factor = std::stod(value);
  else if (key == "scheduler_decay") cfg.scheduler.decay = std::stod(value);
  else if (key == "scheduler_min_lr") cfg.scheduler.min_lr = std::stod(value);
  else if (key == "iso_start_epoch") cfg.iso_start_epoch = std::stoul(value);
  else if (key == "iso_every") cfg.iso_every = std::stoul(value);
  else if (key == "iso_iters") cfg.iso_iters = std::stoi(value);
  else if (key == "iso_fit_steps") cfg.iso_fit_steps = std::stoul(value);
  else if (key == "gamma_l1") cfg.gamma_l1 = std::stod(value);
  else if (key == "rebound") cfg.rebound = bool_from(value);
  else if (key == "rebound_fix_alpha") cfg.rebound_fix_alpha = bool_from(value);
  else if (key == "rebound_shared_hidden") cfg.rebound_shared_hidden = std::stoul(value);
  else if (key == "rebound_branch_hidden") cfg.rebound_branch_hidden = std::stoul(value);
  else if (key == "rebound_gamma_hidden") cfg.rebound_gamma_hidden = std::stoul(value);
  else if (key == "hidden") cfg.hidden = std::stoul(value);
  else if (key == "hidden_layers") cfg.hidden_layers = std::stoul(value);
  else if (key == "n_train") cfg.n_train = std::stoul(value);
  else if (key == "n_test") cfg.n_test = std::stoul(value);
  else if (key == "train_len") cfg.train_len = std::stoul(value);
  else if (key == "test_len") cfg.test_len = std::stoul(value);
  else if (key == "sigma") cfg.sigma = std::stod(value);
  else if (key == "eval_horizon") cfg.eval_horizon = std::stoul(value);
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "threads") cfg.threads = std::stoi(value);
  else if (key == "csv") cfg.export_csv = bool_from(value);
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "data_dir") cfg.data_dir = value;
  else fail("unknown config key: " + key);
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::string& preset_override,
                             std::int64_t seed_override,
                             const std::string& out_dir_override) {
  std::map<std::string, std::string> kv;
  std::vector<std::pair<std::string, std::string>> ordered;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) fail("cannot open config: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        fail("config parse error at line " + std::to_string(lineno) + ": missing '='");
      }
      const std::string key = trim(t.substr(0, eq));
      const std::string value = trim(t.substr(eq + 1));
      if (key.empty() || value.empty()) {
        fail("config parse error at line " + std::to_string(lineno));
      }
      kv[key] = value;
      ordered.emplace_back(key, value);
    }
  }

  const std::string preset = !preset_override.empty() ? preset_override
                             : kv.count("preset")     ? kv["preset"]
                                                      : "desk";
  const System system = kv.count("system") ? system_from(kv["system"]) : System::kSpringChain;
  ExperimentConfig cfg = preset_config(system, preset);
  for (const auto& [key, value] : ordered) {
    if (key == "preset") continue;  // already consumed
    apply_key(cfg, key, value);
  }
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
  cfg.validate();
  return cfg;
}

}  // namespace srnn::cli
