#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cli/commands.hpp"
#include "srnn/systems.hpp"
#include "srnn/training.hpp"

using namespace srnn;
using namespace srnn::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_spring(const fs::path& root) {
  ExperimentConfig cfg = preset_config(System::kSpringChain, "desk");
  cfg.n_train = 4;
  cfg.n_test = 3;
  cfg.train_len = 10;
  cfg.test_len = 12;
  cfg.eval_horizon = 10;
  cfg.sigma = 0.0;
  cfg.epochs = 2;
  cfg.hidden = 16;
  cfg.seed = 5;
  cfg.data_dir = (root / "data").string();
  cfg.out_dir = (root / "run").string();
  return cfg;
}

void write_config(const fs::path& p, const std::string& body) {
  std::ofstream f(p, std::ios::trunc);
  f << body;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("config parsing and validation") {
  const fs::path dir = fresh_dir("srnn_cli_cfg");

  SUBCASE("key = value file with comments") {
    write_config(dir / "a.cfg",
                 "# comment\n"
                 "system = three_body\n"
                 "model = onet\n"
                 "mode = single_step\n"
                 "epochs = 7   # trailing comment\n"
                 "lr = 0.002\n");
    const ExperimentConfig cfg = load_config(dir / "a.cfg");
    CHECK(cfg.system == System::kThreeBody);
    CHECK(cfg.model == ModelChoice::kOnet);
    CHECK(cfg.mode == training::Mode::kSingleStep);
    CHECK(cfg.epochs == 7);
    CHECK(cfg.lr == 0.002);
    // three-body preset defaults survive where not overridden
    CHECK(cfg.dt == 1.0);
    CHECK(cfg.hidden_layers == 3);
  }

  SUBCASE("paper preset carries the published hyperparameters") {
    write_config(dir / "b.cfg", "system = spring_chain\npreset = paper\n");
    const ExperimentConfig cfg = load_config(dir / "b.cfg");
    CHECK(cfg.hidden == 2048);
    CHECK(cfg.epochs == 1000);
    CHECK(cfg.lr == 1e-3);
    CHECK(cfg.n_train == 1000);
    CHECK(cfg.scheduler.patience == 15);
    CHECK(cfg.scheduler.factor == 0.7);
  }

  SUBCASE("flag overrides beat the file") {
    write_config(dir / "c.cfg", "system = spring_chain\nseed = 3\n");
    const ExperimentConfig cfg = load_config(dir / "c.cfg", "desk", 99, "elsewhere");
    CHECK(cfg.seed == 99);
    CHECK(cfg.out_dir == "elsewhere");
  }

  SUBCASE("unknown keys are rejected") {
    write_config(dir / "d.cfg", "system = spring_chain\nnot_a_key = 1\n");
    CHECK_THROWS_AS(load_config(dir / "d.cfg"), Error);
  }

  SUBCASE("rnn with integrator flags is a config error") {
    write_config(dir / "e.cfg",
                 "system = spring_chain\nmodel = rnn\n"
                 "train_integrator = leapfrog\ntest_integrator = none\n");
    CHECK_THROWS_AS(load_config(dir / "e.cfg"), Error);
    write_config(dir / "f.cfg",
                 "system = spring_chain\nmodel = rnn\n"
                 "train_integrator = none\ntest_integrator = none\n");
    CHECK_NOTHROW(load_config(dir / "f.cfg"));
  }

  fs::remove_all(dir);
}

TEST_CASE("generate is deterministic and writes the configured shapes") {
  const fs::path dir = fresh_dir("srnn_cli_gen");
  ExperimentConfig cfg = tiny_spring(dir);
  cfg.sigma = 0.1;
  run_generate(cfg);

  const systems::Dataset train = systems::read_dataset(fs::path(cfg.data_dir) / "train.ds");
  CHECK(train.n_traj == 4);
  CHECK(train.traj_len == 10);
  CHECK(train.d == 20);
  CHECK(train.sigma == 0.1);
  CHECK(fs::exists(fs::path(cfg.data_dir) / "train_clean.ds"));
  CHECK(fs::exists(fs::path(cfg.data_dir) / "test_clean.ds"));

  const std::string first = slurp(fs::path(cfg.data_dir) / "train.ds");
  run_generate(cfg);  // regenerate in place
  CHECK(slurp(fs::path(cfg.data_dir) / "train.ds") == first);

  // a different seed gives different data
  cfg.seed = 6;
  run_generate(cfg);
  CHECK(slurp(fs::path(cfg.data_dir) / "train.ds") != first);

  fs::remove_all(dir);
}

TEST_CASE("train writes a loss history that reruns bit-identically") {
  const fs::path dir = fresh_dir("srnn_cli_train");
  ExperimentConfig cfg = tiny_spring(dir);
  run_generate(cfg);
  run_train(cfg);
  const std::string hist = slurp(fs::path(cfg.out_dir) / "loss_history.csv");
  const std::string ckpt = slurp(fs::path(cfg.out_dir) / "checkpoint.bin");
  run_train(cfg);
  CHECK(slurp(fs::path(cfg.out_dir) / "loss_history.csv") == hist);
  CHECK(slurp(fs::path(cfg.out_dir) / "checkpoint.bin") == ckpt);

  // loss_history.csv has the documented columns
  std::istringstream in(hist);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,train_loss,lr,iso_active");

  fs::remove_all(dir);
}

TEST_CASE("evaluate: ground-truth wrapper on a fine grid has near-zero error") {
  const fs::path dir = fresh_dir("srnn_cli_sim");
  ExperimentConfig cfg = tiny_spring(dir);
  cfg.model = ModelChoice::kSimulation;
  cfg.dt = 0.001;  // fine grid: integrator error is negligible over 10 steps
  run_generate(cfg);
  const EvalSummary s = run_evaluate(cfg);
  CHECK(s.error_mean < 1e-6);
  CHECK(s.n_samples == 3);
  CHECK(s.horizon == 10);
  fs::remove_all(dir);
}

TEST_CASE("evaluate: simulation at coarse dt is reproduced by a brute-force oracle") {
  const fs::path dir = fresh_dir("srnn_cli_metric");
  ExperimentConfig cfg = tiny_spring(dir);
  cfg.model = ModelChoice::kSimulation;
  cfg.dt = 0.5;  // coarse: visible discretization error vs the fine ground truth
  run_generate(cfg);
  const EvalSummary s = run_evaluate(cfg);
  CHECK(s.error_mean > 1e-6);

  // brute-force recomputation of the position-only metric
  const systems::Dataset test = systems::read_dataset(fs::path(cfg.data_dir) / "test.ds");
  const nlohmann::json extra = nlohmann::json::parse(test.extra);
  systems::SpringChain chain;
  chain.masses = extra.at("masses").get<std::vector<double>>();
  chain.springs = extra.at("springs").get<std::vector<double>>();
  const integrators::GradField vp = [&](std::span<const double> q, std::span<double> out) {
    systems::spring_chain_v_prime(chain, q, out);
  };
  const integrators::GradField kp = [&](std::span<const double> p, std::span<double> out) {
    systems::spring_chain_k_prime(chain, p, out);
  };
  double total = 0.0;
  for (std::size_t tr = 0; tr < test.n_traj; ++tr) {
    const auto traj =
        integrators::rollout_leapfrog(vp, kp, test.phase(tr, 0), cfg.eval_horizon, test.dt);
    double sample = 0.0;
    for (std::size_t t = 1; t <= cfg.eval_horizon; ++t) {
      const auto ref = test.phase(tr, t);
      double e = 0.0;
      for (std::size_t i = 0; i < test.d; ++i) {
        e += (traj[t].q[i] - ref.q[i]) * (traj[t].q[i] - ref.q[i]);
      }
      sample += std::sqrt(e);
    }
    total += sample / static_cast<double>(cfg.eval_horizon);
  }
  const double want = total / static_cast<double>(test.n_traj);
  CHECK(std::abs(s.error_mean - want) < 1e-12);

  // the summary CSV is byte-identical when evaluate runs again
  const std::string steps = slurp(fs::path(cfg.out_dir) / "eval_steps.csv");
  const std::string samples = slurp(fs::path(cfg.out_dir) / "eval_samples.csv");
  const std::string summary = slurp(fs::path(cfg.out_dir) / "eval_summary.csv");
  run_evaluate(cfg);
  CHECK(slurp(fs::path(cfg.out_dir) / "eval_steps.csv") == steps);
  CHECK(slurp(fs::path(cfg.out_dir) / "eval_samples.csv") == samples);
  CHECK(slurp(fs::path(cfg.out_dir) / "eval_summary.csv") == summary);

  fs::remove_all(dir);
}

TEST_CASE("report merges run summaries into the comparison table") {
  const fs::path dir = fresh_dir("srnn_cli_report");
  // Synthesize the full spring grid shape: 2 models x 3 integrator pairs x
  // 2 modes plus the rnn row = 13 rows; the iso table shape is 6 + 1 = 7.
  const char* header =
      "mode,model,train_integrator,test_integrator,iso,n_samples,horizon,"
      "error_mean,error_std,clean_error_mean,clean_error_std\n";
  std::vector<fs::path> dirs;
  int idx = 0;
  for (const char* mode : {"single_step", "recurrent"}) {
    for (const char* model : {"onet", "hnet"}) {
      for (const auto& [tr, te] : std::vector<std::pair<const char*, const char*>>{
               {"euler", "euler"}, {"euler", "leapfrog"}, {"leapfrog", "leapfrog"}}) {
        const fs::path rd = dir / ("run" + std::to_string(idx++));
        fs::create_directories(rd);
        std::ofstream out(rd / "eval_summary.csv");
        out << header << mode << "," << model << "," << tr << "," << te << ",0,32,200,"
            << (1.0 + idx) << ",0.5,,\n";
        dirs.push_back(rd);
      }
    }
  }
  {
    const fs::path rd = dir / "run_rnn";
    fs::create_directories(rd);
    std::ofstream out(rd / "eval_summary.csv");
    out << header << "recurrent,rnn,none,none,0,32,200,4.8,0.8,,\n";
    dirs.push_back(rd);
  }
  dirs.push_back(dir / "missing_run");  // skipped with a warning

  const fs::path table = dir / "report.csv";
  run_report(dirs, table);
  std::ifstream in(table);
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  CHECK(line == std::string(header).substr(0, std::string(header).size() - 1));
  while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
  CHECK(rows == 13);

  fs::remove_all(dir);
}

TEST_CASE("constant-prediction baseline is no better than the true equations") {
  const fs::path dir = fresh_dir("srnn_cli_baseline");
  ExperimentConfig cfg = tiny_spring(dir);
  cfg.model = ModelChoice::kSimulation;
  cfg.dt = 0.1;
  run_generate(cfg);
  const EvalSummary sim = run_evaluate(cfg);

  // predicting the initial state forever
  const systems::Dataset test = systems::read_dataset(fs::path(cfg.data_dir) / "test.ds");
  double const_total = 0.0;
  for (std::size_t tr = 0; tr < test.n_traj; ++tr) {
    const auto z0 = test.phase(tr, 0);
    double sample = 0.0;
    for (std::size_t t = 1; t <= cfg.eval_horizon; ++t) {
      const auto ref = test.phase(tr, t);
      double e = 0.0;
      for (std::size_t i = 0; i < test.d; ++i) {
        e += (z0.q[i] - ref.q[i]) * (z0.q[i] - ref.q[i]);
      }
      sample += std::sqrt(e);
    }
    const_total += sample / static_cast<double>(cfg.eval_horizon);
  }
  const double const_mean = const_total / static_cast<double>(test.n_traj);
  CHECK(const_mean >= sim.error_mean);

  fs::remove_all(dir);
}

TEST_SUITE_END();
