#include <gtest/gtest.h>

#include <cmath>

#include "grad_cases.hpp"
#include "morphnet/ppo.hpp"
#include "morphnet/td3.hpp"

using namespace morphnet;
using namespace testutil;

namespace {

EnvConfig short_env() {
  EnvConfig env;
  env.episode_len = 20;
  return env;
}

GcntConfig tiny_net() {
  GcntConfig net = small_net_config();
  net.obs_dim = observation_dim();
  return net;
}

std::vector<Morphology> walkers() { return generate_family("chain_walker", {3, 4}, 0, false); }

Td3Config tiny_td3() {
  Td3Config cfg;
  cfg.batch = 16;
  cfg.initial_explore_steps = 40;
  cfg.updates_per_episode = 2;
  cfg.policy_update_interval = 1;
  return cfg;
}

PpoConfig tiny_ppo() {
  PpoConfig cfg;
  cfg.batch = 80;
  cfg.epochs = 2;
  cfg.minibatches = 2;
  cfg.warmup_iterations = 1;
  return cfg;
}

// Σ_l (γλ)^l δ_{t+l}, stopping after the first done step.
std::vector<double> brute_force_gae(const std::vector<double>& r, const std::vector<double>& v,
                                    const std::vector<double>& d, double g, double l) {
  std::vector<double> out(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    double acc = 0.0, w = 1.0;
    for (std::size_t s = t; s < r.size(); ++s) {
      acc += w * (r[s] + g * (1.0 - d[s]) * v[s + 1] - v[s]);
      if (d[s] != 0.0) break;
      w *= g * l;
    }
    out[t] = acc;
  }
  return out;
}

}  // namespace

TEST(Gae, SingleStep) {
  const GaeResult g = gae_advantages({1.5}, {0.5, 2.0}, {0.0}, 0.9, 0.95);
  EXPECT_DOUBLE_EQ(g.advantages[0], 1.5 + 0.9 * 2.0 - 0.5);
  EXPECT_DOUBLE_EQ(g.returns[0], g.advantages[0] + 0.5);
  EXPECT_DOUBLE_EQ(gae_advantages({1.5}, {0.5, 2.0}, {1.0}, 0.9, 0.95).advantages[0], 1.0);
}

TEST(Gae, ZeroInputsGiveZeroAdvantages) {
  const GaeResult g = gae_advantages({0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0}, 0.99, 0.95);
  for (double a : g.advantages) EXPECT_EQ(a, 0.0);
}

TEST(Gae, LambdaZeroIsOneStepTdAndLambdaOneIsMonteCarlo) {
  const std::vector<double> r{1.0, -2.0, 0.5}, v{0.3, 0.1, -0.4, 0.7}, d{0, 0, 0};
  const double g = 0.9;
  const GaeResult td = gae_advantages(r, v, d, g, 0.0);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(td.advantages[t], r[t] + g * v[t + 1] - v[t], 1e-12);
  const GaeResult mc = gae_advantages(r, v, d, g, 1.0);
  EXPECT_NEAR(mc.advantages[0], 1.0 + g * -2.0 + g * g * 0.5 + g * g * g * 0.7 - 0.3, 1e-12);
  EXPECT_NEAR(mc.advantages[1], -2.0 + g * 0.5 + g * g * 0.7 - 0.1, 1e-12);
  EXPECT_NEAR(mc.advantages[2], 0.5 + g * 0.7 + 0.4, 1e-12);
}

TEST(Gae, MatchesBruteForceOnRandomSequences) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(10), v(11), d(10);
    for (auto& x : r) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    for (auto& x : d) x = rng.uniform() < 0.15 ? 1.0 : 0.0;
    const double g = rng.uniform(0.5, 1.0), l = rng.uniform();
    const GaeResult got = gae_advantages(r, v, d, g, l);
    const auto want = brute_force_gae(r, v, d, g, l);
    for (std::size_t t = 0; t < 10; ++t) {
      EXPECT_NEAR(got.advantages[t], want[t], 1e-12);
      EXPECT_DOUBLE_EQ(got.returns[t], got.advantages[t] + v[t]);
    }
  }
}

TEST(Sampling, UniformForEqualLengthsAndFavoursShortEpisodes) {
  const auto eq = sampling_prob_update({200, 200, 200}, 200, 1e-3);
  for (double p : eq) EXPECT_NEAR(p, 1.0 / 3.0, 1e-12);
  const auto p = sampling_prob_update({50, 200, 120}, 200, 1e-3);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_GT(p[0], p[2]);
  EXPECT_GT(p[2], p[1]);
  EXPECT_GT(sampling_prob_update({250, 10}, 200, 1e-3)[0], 0.0);
}

TEST(PpoSchedule, WarmupThenCosine) {
  EXPECT_DOUBLE_EQ(ppo_learning_rate(1.0, 0, 4, 20), 0.25);
  EXPECT_DOUBLE_EQ(ppo_learning_rate(1.0, 3, 4, 20), 1.0);
  EXPECT_DOUBLE_EQ(ppo_learning_rate(1.0, 4, 4, 20), 1.0);
  EXPECT_NEAR(ppo_learning_rate(1.0, 12, 4, 20), 0.5, 1e-12);
  EXPECT_NEAR(ppo_learning_rate(1.0, 20, 4, 20), 0.0, 1e-12);
}

TEST(PpoKl, EstimatorIsNonNegativeAndZeroAtIdentity) {
  EXPECT_EQ(approx_kl({0.0, 0.0}), 0.0);
  EXPECT_GT(approx_kl({0.1, -0.2}), 0.0);
  EXPECT_NEAR(approx_kl({0.1}), std::expm1(0.1) - 0.1, 1e-15);
}

TEST(Ppo, RatioIsOneAtEpochStart) {
  PpoTrainer ppo(walkers(), short_env(), tiny_ppo(), tiny_net(), 0);
  const std::vector<PpoSample> samples = ppo.collect();
  ASSERT_FALSE(samples.empty());
  const auto lp = ppo.current_log_probs(samples);
  for (std::size_t i = 0; i < samples.size(); ++i) EXPECT_NEAR(lp[i] - samples[i].log_prob, 0.0, 1e-9);
}

TEST(Ppo, AdvantagesAreNormalizedPerBatch) {
  PpoTrainer ppo(walkers(), short_env(), tiny_ppo(), tiny_net(), 1);
  const auto samples = ppo.collect();
  double mean = 0.0, sq = 0.0;
  for (const auto& s : samples) mean += s.advantage;
  mean /= static_cast<double>(samples.size());
  for (const auto& s : samples) sq += (s.advantage - mean) * (s.advantage - mean);
  EXPECT_NEAR(mean, 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(samples.size())), 1.0, 1e-6);
}

TEST(Ppo, ZeroKlThresholdStopsAfterFirstMinibatch) {
  PpoConfig cfg = tiny_ppo();
  cfg.early_stop_kl = 0.0;
  cfg.minibatches = 4;
  PpoTrainer ppo(walkers(), short_env(), cfg, tiny_net(), 2);
  for (int it = 1; it <= 3; ++it) {
    ppo.optimize(ppo.collect(), 1e-3);
    EXPECT_EQ(ppo.diagnostics().minibatch_updates, it);
    EXPECT_EQ(ppo.diagnostics().early_stops, it);
  }
}

TEST(Ppo, SamplingProbabilitiesStayNormalized) {
  PpoTrainer ppo(walkers(), short_env(), tiny_ppo(), tiny_net(), 3);
  ppo.train(TrainSchedule{200, 100, 1, 5});
  double s = 0.0;
  for (double p : ppo.sampling_probs()) s += p;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Ppo, SameSeedSameMetrics) {
  const TrainSchedule sched{200, 100, 2, 5};
  PpoTrainer a(walkers(), short_env(), tiny_ppo(), tiny_net(), 4), b(walkers(), short_env(), tiny_ppo(), tiny_net(), 4);
  EXPECT_EQ(metrics_csv(a.train(sched)), metrics_csv(b.train(sched)));
}

TEST(Td3, TargetsAreExactPolyakAverages) {
  Td3Config cfg = tiny_td3();
  Td3Trainer td3(walkers(), short_env(), cfg, tiny_net(), 0);
  td3.round();
  td3.round();
  const GcntNetwork old_actor = td3.actor_target(), old_q1 = td3.q1_target(), old_q2 = td3.q2_target();
  td3.update(td3.buffer("chain_walker_3"));
  auto check = [&](const GcntNetwork& online, const GcntNetwork& old, const GcntNetwork& target) {
    for (std::size_t i = 0; i < online.params().size(); ++i)
      for (std::size_t j = 0; j < online.params()[i].value.size(); ++j)
        ASSERT_EQ(target.params()[i].value[j],
                  cfg.tau * online.params()[i].value[j] + (1.0 - cfg.tau) * old.params()[i].value[j]);
  };
  check(td3.actor(), old_actor, td3.actor_target());
  check(td3.q1(), old_q1, td3.q1_target());
  check(td3.q2(), old_q2, td3.q2_target());
}

TEST(Td3, BuffersArePerMorphology) {
  Td3Trainer td3(walkers(), short_env(), tiny_td3(), tiny_net(), 1);
  td3.round();
  EXPECT_EQ(td3.steps(), 40);
  for (const auto& m : td3.morphologies()) {
    ReplayBuffer& b = td3.buffer(m.name);
    EXPECT_EQ(b.size(), 20u);
    EXPECT_EQ(b.k(), static_cast<std::size_t>(m.num_nodes));
    Rng rng(0);
    const TransitionBatch batch = b.sample(8, rng);
    EXPECT_EQ(batch.obs.rows(), 8 * b.k());
    for (double d : batch.dones) EXPECT_EQ(d, 0.0);
  }
}

TEST(Td3, EmptyBufferSkipsTheUpdate) {
  Td3Trainer td3(walkers(), short_env(), tiny_td3(), tiny_net(), 2);
  td3.update(td3.buffer("chain_walker_4"));
  EXPECT_EQ(td3.diagnostics().skipped_updates, 1);
  EXPECT_EQ(td3.diagnostics().critic_updates, 0);
}

TEST(Td3, DelayedActorUpdates) {
  Td3Config cfg = tiny_td3();
  cfg.policy_update_interval = 2;
  Td3Trainer td3(walkers(), short_env(), cfg, tiny_net(), 3);
  td3.round();
  td3.round();
  EXPECT_EQ(td3.diagnostics().critic_updates, 8);
  EXPECT_EQ(td3.diagnostics().actor_updates, 4);
}

TEST(Td3, SameSeedSameMetrics) {
  const TrainSchedule sched{160, 80, 2, 5};
  Td3Trainer a(walkers(), short_env(), tiny_td3(), tiny_net(), 5), b(walkers(), short_env(), tiny_td3(), tiny_net(), 5);
  EXPECT_EQ(metrics_csv(a.train(sched)), metrics_csv(b.train(sched)));
}

TEST(Td3, ConfigValidation) {
  Td3Config cfg;
  cfg.tau = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(Td3Trainer({}, short_env(), tiny_td3(), tiny_net(), 0), std::invalid_argument);
}
