#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "srnn/integrators.hpp"
#include "srnn/tensor.hpp"
#include "srnn/util.hpp"

namespace srnn::systems {

using integrators::PhaseState;

// ---------------------------------------------------------------------------
// Spring chain: 20 masses in a line, 21 springs, both ends anchored.
// H = sum p_i^2 / (2 m_i) + sum_j k_j/2 (q_{j+1} - q_j)^2 with q_0 = q_21 = 0.
// ---------------------------------------------------------------------------

struct SpringChain {
  static constexpr std::size_t kMasses = 20;
  std::vector<double> masses;   // kMasses entries
  std::vector<double> springs;  // kMasses + 1 entries
  void validate() const;
};

/// m_i, k_j ~ U(0.5, 1.5), seeded.
SpringChain sample_spring_chain(std::uint64_t seed);

void spring_chain_field(const SpringChain& chain, std::span<const double> p,
                        std::span<const double> q, std::span<double> pdot,
                        std::span<double> qdot);
void spring_chain_v_prime(const SpringChain& chain, std::span<const double> q,
                          std::span<double> out);
void spring_chain_k_prime(const SpringChain& chain, std::span<const double> p,
                          std::span<double> out);
double spring_chain_energy(const SpringChain& chain, std::span<const double> p,
                           std::span<const double> q);

/// Hessian of V (constant for the quadratic chain); used by the analytic
/// on-tape wrapper, whose field is V'(q) = H q and K'(p) = M^{-1} p.
ad::Tensor spring_chain_v_hessian(const SpringChain& chain);
ad::Tensor spring_chain_mass_inverse(const SpringChain& chain);

/// Initial p_i, q_i i.i.d. N(0,1), seeded.
PhaseState sample_spring_chain_initial(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Planar gravity (used with 3 bodies; 2 bodies in tests).
// H = sum |p_i|^2/(2 m_i) - sum_{i<j} G m_i m_j / |q_i - q_j|
// ---------------------------------------------------------------------------

struct GravitySystem {
  std::vector<double> masses;  // one per body
  double G = 1.0;
  std::size_t bodies() const { return masses.size(); }
  std::size_t dim() const { return 2 * bodies(); }
};

/// Throws when any pairwise distance drops below 1e-6.
void gravity_field(const GravitySystem& sys, std::span<const double> p,
                   std::span<const double> q, std::span<double> pdot,
                   std::span<double> qdot);
void gravity_v_prime(const GravitySystem& sys, std::span<const double> q,
                     std::span<double> out);
void gravity_k_prime(const GravitySystem& sys, std::span<const double> p,
                     std::span<double> out);
double gravity_energy(const GravitySystem& sys, std::span<const double> p,
                      std::span<const double> q);
double min_pair_distance(std::span<const double> q, std::size_t bodies);

/// Three unit masses (G = 1).
GravitySystem three_body_system();

struct ThreeBodySampler {
  double radius_lo = 0.9;
  double radius_hi = 1.2;
  double angle_jitter = 0.2;     // radians around the 120 degree spots
  double speed_lo = 0.95;        // scale on the circular-orbit speed
  double speed_hi = 1.05;
  double check_horizon = 10.0;   // reject if a near-collision occurs before this
  double min_distance = 0.2;
  std::size_t max_rejects = 100;
};

/// Near-circular configuration with zero total momentum; candidates whose
/// adaptive ground-truth integration reports a near-collision are rejected
/// and resampled.
PhaseState sample_three_body_initial(std::uint64_t seed, const ThreeBodySampler& opts = {});

// ---------------------------------------------------------------------------
// Bouncing billiard in a walled 128x128 image.
// ---------------------------------------------------------------------------

struct BilliardWorld {
  std::size_t image_size = 128;
  std::size_t wall_thickness = 12;
  double billiard_size = 3.0;  // pixels
  double gravity = 20.0;       // pulls toward -y
  double speed_lo = 20.0;      // initial speed range, pixels/s
  double speed_hi = 60.0;

  /// Contact surface for the billiard center: wall inner edge inset by half
  /// the billiard size.
  double lo() const { return static_cast<double>(wall_thickness) + billiard_size / 2.0; }
  double hi() const {
    return static_cast<double>(image_size - wall_thickness) - billiard_size / 2.0;
  }
};

/// Exact event-handled step: analytic parabolic flight, closed-form earliest
/// wall-contact time, momentum reflection; handles several events per step.
PhaseState billiard_step(const BilliardWorld& world, const PhaseState& z, double dt);

double billiard_energy(const BilliardWorld& world, std::span<const double> p,
                       std::span<const double> q);

PhaseState sample_billiard_initial(const BilliardWorld& world, std::uint64_t seed);

/// 1 on the wall frame, 0 in the free space; row-major image_size^2 values.
std::vector<double> render_wall_image(const BilliardWorld& world);

/// size x size patch around continuous position (x, y); the center is rounded
/// to the nearest pixel c and the window covers [c-size/2, c+size/2-1] in
/// both axes (rows follow y, columns follow x); out-of-range indices clamp to
/// the image edge.
ad::Tensor extract_patch(std::span<const double> image, std::size_t image_size, double x,
                         double y, std::size_t size);

}  // namespace srnn::systems
