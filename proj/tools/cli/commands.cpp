#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "srnn/checkpoint.hpp"
#include "srnn/systems.hpp"

namespace srnn::cli {

using integrators::IntegratorKind;
using integrators::PhaseState;
using systems::Dataset;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Seed streams for the independent random choices of one experiment.
enum SeedStream : std::uint64_t {
  kSystemSeed = 1,
  kTrainInitSeed = 2,
  kTestInitSeed = 3,
  kNoiseTrainSeed = 4,
  kNoiseTestSeed = 5,
  kModelInitSeed = 6,
  kShuffleSeed = 7,
};

Dataset generate_clean(const ExperimentConfig& cfg, std::size_t n_traj, std::size_t traj_len,
                       std::uint64_t init_stream) {
  Dataset ds;
  ds.d = cfg.system == System::kSpringChain ? 20 : cfg.system == System::kThreeBody ? 6 : 2;
  ds.system = system_name(cfg.system);
  ds.n_traj = n_traj;
  ds.traj_len = traj_len;
  ds.dt = cfg.dt;
  ds.sigma = 0.0;
  ds.seed = cfg.seed;
  ds.data.reserve(ds.expected_values());

  auto push_state = [&](std::span<const double> p, std::span<const double> q) {
    ds.data.insert(ds.data.end(), p.begin(), p.end());
    ds.data.insert(ds.data.end(), q.begin(), q.end());
  };

  switch (cfg.system) {
    case System::kSpringChain: {
      const systems::SpringChain chain =
          systems::sample_spring_chain(subseed(cfg.seed, kSystemSeed));
      nlohmann::json extra = {{"masses", chain.masses}, {"springs", chain.springs}};
      ds.extra = extra.dump();
      const integrators::GradField vp = [&](std::span<const double> q, std::span<double> out) {
        systems::spring_chain_v_prime(chain, q, out);
      };
      const integrators::GradField kp = [&](std::span<const double> p, std::span<double> out) {
        systems::spring_chain_k_prime(chain, p, out);
      };
      // ground truth: fine leapfrog at dt/100, coarsened by a factor of 100
      const double fine_dt = cfg.dt / 100.0;
      for (std::size_t tr = 0; tr < n_traj; ++tr) {
        PhaseState z =
            systems::sample_spring_chain_initial(subseed(cfg.seed, init_stream + 10 + tr));
        push_state(z.p, z.q);
        for (std::size_t t = 1; t < traj_len; ++t) {
          for (int f = 0; f < 100; ++f) z = integrators::leapfrog_step(vp, kp, z, fine_dt);
          push_state(z.p, z.q);
        }
      }
      break;
    }
    case System::kThreeBody: {
      const systems::GravitySystem sys = systems::three_body_system();
      nlohmann::json extra = {{"G", sys.G}, {"masses", sys.masses}};
      ds.extra = extra.dump();
      const integrators::FlatField field = [&](double, std::span<const double> y,
                                               std::span<double> dy) {
        systems::gravity_field(sys, y.subspan(0, 6), y.subspan(6, 6), dy.subspan(0, 6),
                               dy.subspan(6, 6));
      };
      std::vector<double> times(traj_len);
      for (std::size_t t = 0; t < traj_len; ++t) times[t] = cfg.dt * static_cast<double>(t);
      systems::ThreeBodySampler sampler;
      sampler.check_horizon = cfg.dt * static_cast<double>(traj_len - 1);
      for (std::size_t tr = 0; tr < n_traj; ++tr) {
        const PhaseState z0 =
            systems::sample_three_body_initial(subseed(cfg.seed, init_stream + 10 + tr), sampler);
        std::vector<double> y = z0.flat();
        const auto states = integrators::adaptive_sample(field, y, times);
        for (const auto& s : states) {
          push_state(std::span<const double>(s).subspan(0, 6),
                     std::span<const double>(s).subspan(6, 6));
        }
      }
      break;
    }
    case System::kBilliard: {
      const systems::BilliardWorld world;
      nlohmann::json extra = {{"image_size", world.image_size},
                              {"wall_thickness", world.wall_thickness},
                              {"billiard_size", world.billiard_size},
                              {"gravity", world.gravity},
                              {"speed_lo", world.speed_lo},
                              {"speed_hi", world.speed_hi}};
      ds.extra = extra.dump();
      for (std::size_t tr = 0; tr < n_traj; ++tr) {
        PhaseState z =
            systems::sample_billiard_initial(world, subseed(cfg.seed, init_stream + 10 + tr));
        push_state(z.p, z.q);
        for (std::size_t t = 1; t < traj_len; ++t) {
          z = systems::billiard_step(world, z, cfg.dt);
          push_state(z.p, z.q);
        }
      }
      break;
    }
  }
  ds.validate();
  return ds;
}

systems::BilliardWorld world_from_extra(const std::string& extra) {
  const nlohmann::json j = nlohmann::json::parse(extra);
  systems::BilliardWorld world;
  world.image_size = j.at("image_size").get<std::size_t>();
  world.wall_thickness = j.at("wall_thickness").get<std::size_t>();
  world.billiard_size = j.at("billiard_size").get<double>();
  world.gravity = j.at("gravity").get<double>();
  world.speed_lo = j.at("speed_lo").get<double>();
  world.speed_hi = j.at("speed_hi").get<double>();
  return world;
}

// Fixed affine normalization for the pixel-unit billiard system; without it
// tanh layers saturate on inputs of order 100 and gradients vanish.
void apply_billiard_scaling(ExperimentConfig const& cfg, models::Model& model) {
  if (cfg.system != System::kBilliard) return;
  const double p_scale = 1.0 / 40.0;
  const double q_scale = 1.0 / 51.0;
  const double q_mid = 64.0;
  switch (model.kind()) {
    case models::ModelKind::kHnet: {
      models::HnetModel& h = model.hnet();
      h.kinetic.input_scale = {p_scale, p_scale};
      h.kinetic.output_scale = {2000.0};
      h.potential.input_shift = {q_mid, q_mid};
      h.potential.input_scale = {q_scale, q_scale};
      h.potential.output_scale = {1000.0};
      break;
    }
    case models::ModelKind::kOnet: {
      models::OnetModel& o = model.onet();
      o.net.input_shift = {0, 0, q_mid, q_mid};
      o.net.input_scale = {p_scale, p_scale, q_scale, q_scale};
      o.net.output_scale = {20, 20, 50, 50};
      break;
    }
    case models::ModelKind::kRnn:
      break;  // not used on the billiard system
  }
}

models::Model build_model(const ExperimentConfig& cfg, std::size_t d) {
  Rng rng(subseed(cfg.seed, kModelInitSeed));
  models::Model model = [&] {
    switch (cfg.model) {
      case ModelChoice::kHnet:
        return models::make_hnet(d, std::vector<std::size_t>(cfg.hidden_layers, cfg.hidden),
                                 rng);
      case ModelChoice::kOnet:
        return models::make_onet(d, std::vector<std::size_t>(cfg.hidden_layers, cfg.hidden),
                                 rng);
      case ModelChoice::kRnn:
        return models::make_rnn(d, cfg.hidden, rng);
      case ModelChoice::kSimulation:
        fail("the simulation baseline has no trainable model");
    }
    fail("unreachable");
  }();
  apply_billiard_scaling(cfg, model);
  if (cfg.rebound) {
    models::ReboundSpec spec;
    spec.shared_hidden = cfg.rebound_shared_hidden;
    spec.branch_hidden = cfg.rebound_branch_hidden;
    spec.gamma_hidden = cfg.rebound_gamma_hidden;
    spec.fix_alpha = cfg.rebound_fix_alpha;
    models::attach_rebound(model, spec, rng);
  }
  return model;
}

// Numeric (oracle-grade) rollout of the true equations, for the simulation
// baseline rows.
std::vector<PhaseState> simulate_true(const ExperimentConfig& cfg, const Dataset& ds,
                                      const PhaseState& z0, std::size_t n_steps) {
  if (cfg.test_integrator == IntegratorKind::kReboundLeapfrog) {
    fail("simulation baseline supports euler/leapfrog test integrators");
  }
  const bool euler = cfg.test_integrator == IntegratorKind::kEuler;
  switch (cfg.system) {
    case System::kSpringChain: {
      const nlohmann::json j = nlohmann::json::parse(ds.extra);
      systems::SpringChain chain;
      chain.masses = j.at("masses").get<std::vector<double>>();
      chain.springs = j.at("springs").get<std::vector<double>>();
      const integrators::GradField vp = [chain](std::span<const double> q,
                                                std::span<double> out) {
        systems::spring_chain_v_prime(chain, q, out);
      };
      const integrators::GradField kp = [chain](std::span<const double> p,
                                                std::span<double> out) {
        systems::spring_chain_k_prime(chain, p, out);
      };
      if (euler) {
        const integrators::VectorField f = [chain](std::span<const double> p,
                                                   std::span<const double> q,
                                                   std::span<double> pd, std::span<double> qd) {
          systems::spring_chain_field(chain, p, q, pd, qd);
        };
        return integrators::rollout_euler(f, z0, n_steps, cfg.dt);
      }
      return integrators::rollout_leapfrog(vp, kp, z0, n_steps, cfg.dt);
    }
    case System::kThreeBody: {
      const systems::GravitySystem sys = systems::three_body_system();
      const integrators::GradField vp = [sys](std::span<const double> q, std::span<double> out) {
        systems::gravity_v_prime(sys, q, out);
      };
      const integrators::GradField kp = [sys](std::span<const double> p, std::span<double> out) {
        systems::gravity_k_prime(sys, p, out);
      };
      if (euler) {
        const integrators::VectorField f = [sys](std::span<const double> p,
                                                 std::span<const double> q, std::span<double> pd,
                                                 std::span<double> qd) {
          systems::gravity_field(sys, p, q, pd, qd);
        };
        return integrators::rollout_euler(f, z0, n_steps, cfg.dt);
      }
      return integrators::rollout_leapfrog(vp, kp, z0, n_steps, cfg.dt);
    }
    case System::kBilliard: {
      const systems::BilliardWorld world = world_from_extra(ds.extra);
      std::vector<PhaseState> traj;
      traj.reserve(n_steps + 1);
      traj.push_back(z0);
      for (std::size_t s = 0; s < n_steps; ++s) {
        traj.push_back(systems::billiard_step(world, traj.back(), cfg.dt));
      }
      return traj;
    }
  }
  fail("unreachable");
}

}  // namespace

void run_generate(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.data_dir);
  const std::filesystem::path dir = cfg.data_dir;

  const Dataset train_clean = generate_clean(cfg, cfg.n_train, cfg.train_len, 1000000);
  const Dataset test_clean = generate_clean(cfg, cfg.n_test, cfg.test_len, 2000000);

  if (cfg.sigma > 0.0) {
    const Dataset train =
        systems::add_noise(train_clean, cfg.sigma, subseed(cfg.seed, kNoiseTrainSeed));
    const Dataset test =
        systems::add_noise(test_clean, cfg.sigma, subseed(cfg.seed, kNoiseTestSeed));
    systems::write_dataset(train, dir / "train.ds");
    systems::write_dataset(test, dir / "test.ds");
    systems::write_dataset(train_clean, dir / "train_clean.ds");
    systems::write_dataset(test_clean, dir / "test_clean.ds");
    if (cfg.export_csv) {
      systems::write_dataset_csv(train, dir / "train.csv");
      systems::write_dataset_csv(test, dir / "test.csv");
    }
  } else {
    systems::write_dataset(train_clean, dir / "train.ds");
    systems::write_dataset(test_clean, dir / "test.ds");
    if (cfg.export_csv) {
      systems::write_dataset_csv(train_clean, dir / "train.csv");
      systems::write_dataset_csv(test_clean, dir / "test.csv");
    }
  }
}

void run_train(const ExperimentConfig& cfg) {
  if (cfg.model == ModelChoice::kSimulation) {
    fail("train: the simulation baseline has no trainable model");
  }
  const Dataset ds = systems::read_dataset(std::filesystem::path(cfg.data_dir) / "train.ds");
  models::Model model = build_model(cfg, ds.d);

  std::vector<double> image;
  training::TrainConfig tc;
  tc.mode = cfg.mode;
  tc.kind = cfg.train_integrator;
  tc.dt = 0.0;  // take the dataset grid
  tc.window = cfg.window;
  tc.epochs = cfg.epochs;
  tc.batch = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.scheduler = cfg.scheduler;
  tc.iso = cfg.iso;
  tc.iso_start = cfg.iso_start_epoch;
  tc.iso_every = cfg.iso_every;
  tc.iso_iters = cfg.iso_iters;
  tc.gamma_l1 = cfg.gamma_l1;
  tc.seed = subseed(cfg.seed, kShuffleSeed);
  tc.threads = cfg.threads;
  if (cfg.rebound) {
    const systems::BilliardWorld world = world_from_extra(ds.extra);
    image = systems::render_wall_image(world);
    tc.wall_image = &image;
    tc.image_size = world.image_size;
  }

  const training::TrainResult result = training::train(model, ds, tc);

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir = cfg.out_dir;
  models::save_model(model, dir / "checkpoint.bin");

  std::ofstream hist(dir / "loss_history.csv", std::ios::trunc);
  hist << "epoch,train_loss,lr,iso_active\n";
  for (const auto& e : result.history) {
    hist << e.epoch << "," << fmt(e.loss) << "," << fmt(e.lr) << "," << (e.iso_active ? 1 : 0)
         << "\n";
  }
}

EvalSummary run_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint) {
  const std::filesystem::path data_dir = cfg.data_dir;
  const Dataset test = systems::read_dataset(data_dir / "test.ds");
  const bool has_clean =
      cfg.sigma > 0.0 && std::filesystem::exists(data_dir / "test_clean.ds");
  Dataset test_clean;
  if (has_clean) test_clean = systems::read_dataset(data_dir / "test_clean.ds");

  const std::size_t horizon = cfg.eval_horizon;
  if (test.traj_len < horizon + 1) fail("evaluate: test trajectories shorter than horizon");
  const std::size_t d = test.d;

  // Build the predictor.
  models::Model model{models::HnetModel{}, std::nullopt};
  std::vector<double> image;
  training::RolloutSpec rspec;
  rspec.kind = cfg.test_integrator;
  rspec.dt = test.dt;
  const bool learned = cfg.model != ModelChoice::kSimulation;
  if (learned) {
    const std::filesystem::path ckpt =
        checkpoint.empty() ? std::filesystem::path(cfg.out_dir) / "checkpoint.bin" : checkpoint;
    model = models::load_model(ckpt);
    if (model.dim() != d) fail("evaluate: checkpoint dimension mismatch");
    if (model.rebound) {
      const systems::BilliardWorld world = world_from_extra(test.extra);
      image = systems::render_wall_image(world);
      rspec.wall_image = &image;
      rspec.image_size = world.image_size;
    }
    if (cfg.test_integrator == IntegratorKind::kReboundLeapfrog && !model.rebound) {
      fail("evaluate: rebound integrator needs a rebound checkpoint");
    }
  }

  training::LbfgsOptions iso_opts;
  iso_opts.max_iters = cfg.iso_iters == 0 ? 20 : cfg.iso_iters;

  std::vector<std::vector<double>> errors(test.n_traj);        // vs (noisy) reference
  std::vector<std::vector<double>> clean_errors(test.n_traj);  // vs clean reference
  for (std::size_t tr = 0; tr < test.n_traj; ++tr) {
    PhaseState z0 = test.phase(tr, 0);
    if (cfg.iso && learned) {
      const std::size_t k = std::min(cfg.iso_fit_steps, test.traj_len);
      std::vector<double> obs;
      obs.reserve(k * 2 * d);
      for (std::size_t t = 0; t < k; ++t) {
        const auto z = test.state(tr, t);
        obs.insert(obs.end(), z.begin(), z.end());
      }
      const training::RolloutBinder binder = training::model_rollout_binder(model, rspec);
      const std::vector<double> fit =
          training::iso_fit_initial(binder, obs, k, d, iso_opts);
      z0 = PhaseState(std::vector<double>(fit.begin(), fit.begin() + d),
                      std::vector<double>(fit.begin() + d, fit.end()));
    }

    std::vector<PhaseState> pred;
    if (learned) {
      const training::RolloutBinder binder = training::model_rollout_binder(model, rspec);
      pred = training::predict(binder, z0, horizon);
    } else {
      pred = simulate_true(cfg, test, z0, horizon);
    }

    errors[tr].resize(horizon);
    if (has_clean) clean_errors[tr].resize(horizon);
    for (std::size_t t = 1; t <= horizon; ++t) {
      const PhaseState ref = test.phase(tr, t);
      double e = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double dq = pred[t].q[i] - ref.q[i];
        e += dq * dq;
      }
      errors[tr][t - 1] = std::sqrt(e);
      if (has_clean) {
        const PhaseState cref = test_clean.phase(tr, t);
        double ce = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double dq = pred[t].q[i] - cref.q[i];
          ce += dq * dq;
        }
        clean_errors[tr][t - 1] = std::sqrt(ce);
      }
    }
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };

  std::vector<double> sample_means(test.n_traj), clean_sample_means(test.n_traj);
  for (std::size_t tr = 0; tr < test.n_traj; ++tr) {
    sample_means[tr] = mean_of(errors[tr]);
    if (has_clean) clean_sample_means[tr] = mean_of(clean_errors[tr]);
  }

  EvalSummary summary;
  summary.n_samples = test.n_traj;
  summary.horizon = horizon;
  summary.error_mean = mean_of(sample_means);
  summary.error_std = std_of(sample_means, summary.error_mean);
  summary.has_clean = has_clean;
  if (has_clean) {
    summary.clean_error_mean = mean_of(clean_sample_means);
    summary.clean_error_std = std_of(clean_sample_means, summary.clean_error_mean);
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir = cfg.out_dir;

  {
    std::ofstream out(dir / "eval_steps.csv", std::ios::trunc);
    out << (has_clean ? "step,mean_err,std_err,clean_mean_err,clean_std_err\n"
                      : "step,mean_err,std_err\n");
    std::vector<double> col(test.n_traj), ccol(test.n_traj);
    for (std::size_t t = 0; t < horizon; ++t) {
      for (std::size_t tr = 0; tr < test.n_traj; ++tr) col[tr] = errors[tr][t];
      const double m = mean_of(col);
      out << (t + 1) << "," << fmt(m) << "," << fmt(std_of(col, m));
      if (has_clean) {
        for (std::size_t tr = 0; tr < test.n_traj; ++tr) ccol[tr] = clean_errors[tr][t];
        const double cm = mean_of(ccol);
        out << "," << fmt(cm) << "," << fmt(std_of(ccol, cm));
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "eval_samples.csv", std::ios::trunc);
    out << (has_clean ? "sample,mean_err,clean_mean_err\n" : "sample,mean_err\n");
    for (std::size_t tr = 0; tr < test.n_traj; ++tr) {
      out << tr << "," << fmt(sample_means[tr]);
      if (has_clean) out << "," << fmt(clean_sample_means[tr]);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "eval_summary.csv", std::ios::trunc);
    out << "mode,model,train_integrator,test_integrator,iso,n_samples,horizon,"
           "error_mean,error_std,clean_error_mean,clean_error_std\n";
    out << training::mode_name(cfg.mode) << "," << model_choice_name(cfg.model) << ","
        << (cfg.train_integrator_none ? "none" : integrators::integrator_name(cfg.train_integrator))
        << ","
        << (cfg.test_integrator_none ? "none" : integrators::integrator_name(cfg.test_integrator))
        << "," << (cfg.iso ? 1 : 0) << "," << summary.n_samples << "," << summary.horizon << ","
        << fmt(summary.error_mean) << "," << fmt(summary.error_std) << ","
        << (has_clean ? fmt(summary.clean_error_mean) : "") << ","
        << (has_clean ? fmt(summary.clean_error_std) : "") << "\n";
  }
  return summary;
}

void run_report(const std::vector<std::filesystem::path>& run_dirs,
                const std::filesystem::path& out_csv) {
  std::vector<std::string> rows;
  std::string header;
  for (const auto& dir : run_dirs) {
    const std::filesystem::path summary = dir / "eval_summary.csv";
    std::ifstream in(summary);
    if (!in) {
      std::cerr << "report: missing " << summary.string() << ", skipping\n";
      continue;
    }
    std::string line;
    if (!std::getline(in, line)) continue;
    header = line;
    while (std::getline(in, line)) {
      if (!line.empty()) rows.push_back(line);
    }
  }
  if (header.empty()) fail("report: no completed evaluations found");
  std::sort(rows.begin(), rows.end());
  std::ofstream out(out_csv, std::ios::trunc);
  out << header << "\n";
  for (const std::string& r : rows) out << r << "\n";
}

}  // namespace srnn::cli
