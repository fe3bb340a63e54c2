#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "srnn/integrators.hpp"
#include "srnn/util.hpp"

namespace srnn::systems {

/// Uniformly sampled trajectories plus time-step and noise metadata.
/// Payload layout: [traj][time][p_0..p_{d-1}, q_0..q_{d-1}].
struct Dataset {
  std::string system;
  std::size_t d = 0;
  std::size_t n_traj = 0;
  std::size_t traj_len = 0;  // states per trajectory, including the initial one
  double dt = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string extra;  // JSON with system parameters; may be empty
  std::vector<double> data;

  std::size_t state_size() const { return 2 * d; }
  std::size_t expected_values() const { return n_traj * traj_len * state_size(); }

  std::span<const double> state(std::size_t traj, std::size_t t) const {
    return std::span<const double>(data).subspan((traj * traj_len + t) * state_size(),
                                                 state_size());
  }
  std::span<double> state(std::size_t traj, std::size_t t) {
    return std::span<double>(data).subspan((traj * traj_len + t) * state_size(),
                                           state_size());
  }
  integrators::PhaseState phase(std::size_t traj, std::size_t t) const {
    return integrators::PhaseState::from_flat(state(traj, t));
  }
  void validate() const;
};

/// Container: magic "SRNNDS01", u32 little-endian header length, UTF-8 JSON
/// header, then little-endian float64 payload.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// One row per (traj, time): traj,t,p_0..p_{d-1},q_0..q_{d-1}.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

/// Elementwise i.i.d. N(0, sigma^2) on every state, seeded. The returned
/// dataset records sigma and the noise seed.
Dataset add_noise(const Dataset& ds, double sigma, std::uint64_t seed);

}  // namespace srnn::systems
