#pragma once

// Joint TD3 over several morphologies: one shared actor, twin critics and
// their target copies, and a separate replay buffer per morphology.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "morphnet/env.hpp"
#include "morphnet/gcnt.hpp"
#include "morphnet/replay.hpp"
#include "morphnet/rollout.hpp"

namespace morphnet {

struct Td3Config {
  int batch = 100;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  double tau = 0.046;
  double explore_sigma = 0.126;
  double gamma = 0.99;
  int policy_update_interval = 2;
  std::int64_t initial_explore_steps = 10000;
  double lr = 1e-4;
  double grad_clip = 0.1;
  std::size_t buffer_capacity = 500000;
  /// Gradient steps per morphology after each round of episodes.
  int updates_per_episode = 1;

  void validate() const;
};

struct TrainSchedule {
  std::int64_t total_steps = 50000;
  std::int64_t eval_interval = 10000;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 1000;
};

struct Td3Diagnostics {
  std::int64_t critic_updates = 0;
  std::int64_t actor_updates = 0;
  std::int64_t skipped_updates = 0;
  std::int64_t clamped_actions = 0;
  double last_critic_loss = 0.0;
  double last_actor_loss = 0.0;
};

class Td3Trainer {
 public:
  Td3Trainer(std::vector<Morphology> ms, EnvConfig env, Td3Config cfg, GcntConfig net, std::uint64_t seed);

  /// Runs until total_steps environment steps have been collected, evaluating
  /// every eval_interval steps and once at the end.
  std::vector<MetricsRow> train(const TrainSchedule& schedule);

  /// One round: an episode per morphology, then the update pass.
  void round();
  /// One critic step (and maybe an actor step) on a batch from `buffer`.
  void update(const ReplayBuffer& buffer);

  GcntNetwork& actor() { return actor_; }
  GcntNetwork& actor_target() { return actor_target_; }
  GcntNetwork& q1() { return q1_; }
  GcntNetwork& q2() { return q2_; }
  GcntNetwork& q1_target() { return q1_target_; }
  GcntNetwork& q2_target() { return q2_target_; }
  const Td3Diagnostics& diagnostics() const { return diag_; }
  std::int64_t steps() const { return steps_; }
  ReplayBuffer& buffer(const std::string& name);
  const std::vector<Morphology>& morphologies() const { return ms_; }

 private:
  void run_episode(std::size_t index);

  std::vector<Morphology> ms_;
  EnvConfig env_;
  Td3Config cfg_;
  GcntConfig net_;
  std::uint64_t seed_;
  GcntNetwork actor_;
  GcntNetwork q1_;
  GcntNetwork q2_;
  GcntNetwork actor_target_;
  GcntNetwork q1_target_;
  GcntNetwork q2_target_;
  ad::Adam actor_opt_;
  ad::Adam critic_opt_;
  EncodingCache cache_;
  std::vector<ReplayBuffer> buffers_;
  Rng explore_rng_;
  Rng sample_rng_;
  std::int64_t steps_ = 0;
  std::int64_t episodes_ = 0;
  Td3Diagnostics diag_;
  double critic_loss_sum_ = 0.0;
  std::int64_t critic_loss_count_ = 0;
};

}  // namespace morphnet
