#pragma once

// Planar chain robots driven by one torque per non-root limb. Each limb's joint
// (the one linking it to its parent) swings within a symmetric range; the base
// is pushed forward by v = Σ c(type)·sin θ·θ̇ over the joints.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "morphnet/autodiff.hpp"
#include "morphnet/morphology.hpp"
#include "morphnet/rng.hpp"

namespace morphnet {

struct EnvConfig {
  double dt = 0.05;
  int episode_len = 200;
  double ctrl_cost = 0.05;
  double damping = 0.5;
  std::array<double, kNumLimbTypes> gear{0.0, 14.0, 14.0, 14.0, 10.0};
  double joint_range = 1.5707963267948966;
  double omega_max = 8.0;
  std::array<double, kNumLimbTypes> propulsion{0.0, 1.0, 0.6, 0.0, 0.0};

  void validate() const;
  double max_gear() const;
  double max_propulsion() const;
};

/// Width of every limb's observation row.
int observation_dim();

struct EnvState {
  double x = 0.0;
  std::vector<double> theta;      // per node; the root entry stays 0
  std::vector<double> theta_dot;  // per node; the root entry stays 0
  int t = 0;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  int clamped_actions = 0;
};

EnvState reset(const Morphology& m, const EnvConfig& cfg, std::uint64_t seed);

/// Advances the state in place. Actions outside [−1, 1] are clamped and counted.
StepResult step(EnvState& s, std::span<const double> actions, const Morphology& m, const EnvConfig& cfg);

/// K × observation_dim() rows: one-hot type, sin θ, cos θ, θ̇/ω_max,
/// (θ + range)/(2·range), depth/K, gear/max_gear.
ad::Matrix observe(const EnvState& s, const Morphology& m, const EnvConfig& cfg);
/// Same, with the depths precomputed.
ad::Matrix observe(const EnvState& s, const Morphology& m, const EnvConfig& cfg, const std::vector<int>& depth);

/// Pushes every propulsive joint toward the side it already leans to and
/// leaves the rest idle.
std::vector<double> oracle_action(const EnvState& s, const Morphology& m, const EnvConfig& cfg);

/// Families: "chain_walker" (thigh, shin, foot repeating down a path) and
/// "chain_mixed" (path with random leg/arm types). Each size n >= 3 also yields
/// "<kind>_<n>_missing" with the last leaf removed.
std::vector<Morphology> generate_family(const std::string& kind, const std::vector<int>& sizes, std::uint64_t seed,
                                        bool with_missing = true);

Morphology chain_walker(int size);

}  // namespace morphnet
