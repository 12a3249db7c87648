#pragma once

// Joint PPO over several morphologies: whole episodes from sampled
// morphologies go into one shared batch; clipped surrogate plus value loss,
// no entropy bonus, KL early stopping, episode-length based sampling.

#include <cstdint>
#include <string>
#include <vector>

#include "morphnet/env.hpp"
#include "morphnet/gcnt.hpp"
#include "morphnet/rollout.hpp"
#include "morphnet/td3.hpp"

namespace morphnet {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  int epochs = 8;
  int batch = 5120;
  /// Environment steps per iteration = batch / batch_divisor.
  double batch_divisor = 1.0;
  int minibatches = 4;
  double clip = 0.2;
  double value_coef = 0.2;
  double early_stop_kl = 0.05;
  int warmup_iterations = 5;
  double lr = 3e-4;
  double grad_clip = 0.5;
  double sampling_floor = 1e-3;

  void validate() const;
  int steps_per_iteration() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// values has one more entry than rewards: the value of the state after the
/// last step. dones[t] = 1 stops bootstrapping from step t onward.
GaeResult gae_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                         const std::vector<double>& dones, double gamma, double lambda);

/// p_n ∝ max(floor, T_max − mean_len_n + 1), normalized.
std::vector<double> sampling_prob_update(const std::vector<double>& mean_episode_lens, int max_episode_len,
                                         double floor);

/// Linear warmup over `warmup` iterations, then cosine decay to 0 at `total`.
double ppo_learning_rate(double base, int iteration, int warmup, int total);

/// Approximate KL between old and new policies: mean((r − 1) − log r).
double approx_kl(const std::vector<double>& log_ratio);

struct PpoDiagnostics {
  std::int64_t iterations = 0;
  std::int64_t early_stops = 0;
  std::int64_t minibatch_updates = 0;
  double last_kl = 0.0;
  double last_clip_frac = 0.0;
  double last_value_loss = 0.0;
};

/// One stored rollout step; grouped by morphology at update time.
struct PpoSample {
  std::size_t morph = 0;
  ad::Matrix obs;       // K × obs_dim
  ad::Matrix pre_tanh;  // K × action_dim
  double log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

class PpoTrainer {
 public:
  PpoTrainer(std::vector<Morphology> ms, EnvConfig env, PpoConfig cfg, GcntConfig net, std::uint64_t seed);

  std::vector<MetricsRow> train(const TrainSchedule& schedule);

  /// Collects one iteration of episodes; returns them with advantages set.
  std::vector<PpoSample> collect();
  /// Runs the epochs over `samples` at learning rate `lr`.
  void optimize(std::vector<PpoSample> samples, double lr);

  /// Log-probabilities of stored samples under the current actor, in order.
  std::vector<double> current_log_probs(const std::vector<PpoSample>& samples);

  GcntNetwork& actor() { return actor_; }
  GcntNetwork& value() { return value_; }
  const PpoDiagnostics& diagnostics() const { return diag_; }
  const std::vector<double>& sampling_probs() const { return probs_; }
  std::int64_t steps() const { return steps_; }

 private:
  std::vector<Morphology> ms_;
  EnvConfig env_;
  PpoConfig cfg_;
  GcntConfig net_;
  std::uint64_t seed_;
  GcntNetwork actor_;
  GcntNetwork value_;
  ad::Adam opt_;
  EncodingCache cache_;
  Rng rng_;
  std::vector<double> probs_;
  std::vector<double> len_sum_;
  std::vector<double> len_count_;
  std::int64_t steps_ = 0;
  std::int64_t episodes_ = 0;
  PpoDiagnostics diag_;
};

}  // namespace morphnet
