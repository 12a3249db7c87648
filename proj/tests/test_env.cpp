#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "morphnet/env.hpp"
#include "morphnet/replay.hpp"
#include "morphnet/rollout.hpp"
#include "test_util.hpp"

using namespace morphnet;
using namespace testutil;

TEST(Env, ResetIsSeededAndKeepsRootAtZero) {
  const Morphology m = chain_walker(5);
  const EnvConfig cfg;
  const EnvState a = reset(m, cfg, 3), b = reset(m, cfg, 3), c = reset(m, cfg, 4);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_NE(a.theta, c.theta);
  EXPECT_EQ(a.theta[0], 0.0);
  for (double th : a.theta) EXPECT_LE(std::abs(th), 0.1);
}

TEST(Env, OneStepByHand) {
  const Morphology m = chain_walker(2);
  const EnvConfig cfg;
  EnvState s;
  s.theta = {0.0, 0.1};
  s.theta_dot = {0.0, 0.0};
  const std::vector<double> a{0.7, 1.0};
  const StepResult r = step(s, a, m, cfg);
  // ω = 0.05·14 = 0.7, θ = 0.1 + 0.05·0.7; the root action is ignored.
  EXPECT_DOUBLE_EQ(s.theta_dot[1], 0.7);
  EXPECT_DOUBLE_EQ(s.theta[1], 0.135);
  EXPECT_NEAR(r.reward, 0.05 * std::sin(0.135) * 0.7 - 0.05, 1e-15);
  EXPECT_EQ(s.theta[0], 0.0);
  EXPECT_EQ(s.t, 1);
  EXPECT_FALSE(r.done);
}

TEST(Env, OutOfRangeActionsAreClampedAndCounted) {
  const Morphology m = chain_walker(4);
  const EnvConfig cfg;
  EnvState s1 = reset(m, cfg, 1), s2 = s1;
  const std::vector<double> wild{0.0, 3.0, -1.5, std::nan("")};
  const std::vector<double> tame{0.0, 1.0, -1.0, 0.0};
  const StepResult r1 = step(s1, wild, m, cfg);
  const StepResult r2 = step(s2, tame, m, cfg);
  EXPECT_EQ(r1.clamped_actions, 3);
  EXPECT_EQ(r2.clamped_actions, 0);
  EXPECT_EQ(s1.theta, s2.theta);
  EXPECT_EQ(r1.reward, r2.reward);
  EXPECT_THROW(step(s1, std::vector<double>{0.0}, m, cfg), DimensionError);
}

TEST(Env, StateStaysWithinLimitsAndEpisodeEndsOnTime) {
  const Morphology m = chain_walker(6);
  EnvConfig cfg;
  cfg.episode_len = 50;
  Rng rng(2);
  EnvState s = reset(m, cfg, 2);
  StepResult r;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(6);
    for (double& x : a) x = rng.uniform(-1.0, 1.0);
    r = step(s, a, m, cfg);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_LE(std::abs(s.theta[i]), cfg.joint_range);
      EXPECT_LE(std::abs(s.theta_dot[i]), cfg.omega_max);
    }
    EXPECT_EQ(r.done, t == 49);
  }
}

TEST(Env, ObservationLayout) {
  const Morphology m = chain_walker(4);
  const EnvConfig cfg;
  EnvState s = reset(m, cfg, 0);
  s.theta[2] = 0.5;
  s.theta_dot[2] = -4.0;
  const ad::Matrix o = observe(s, m, cfg);
  ASSERT_EQ(o.cols(), 11u);
  EXPECT_EQ(o(2, kShin), 1.0);
  EXPECT_DOUBLE_EQ(o(2, 5), std::sin(0.5));
  EXPECT_DOUBLE_EQ(o(2, 6), std::cos(0.5));
  EXPECT_DOUBLE_EQ(o(2, 7), -0.5);
  EXPECT_DOUBLE_EQ(o(2, 8), (0.5 + M_PI / 2) / M_PI);
  EXPECT_DOUBLE_EQ(o(2, 9), 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(o(2, 10), 1.0);
  EXPECT_DOUBLE_EQ(o(0, 10), 0.0);
}

TEST(Env, FamiliesAndMissingVariants) {
  const auto fam = generate_family("chain_walker", {2, 3, 5}, 0);
  std::vector<std::string> names;
  for (const auto& m : fam) {
    names.push_back(m.name);
    EXPECT_NO_THROW(validate(m));
  }
  EXPECT_EQ(names, (std::vector<std::string>{"chain_walker_2", "chain_walker_3", "chain_walker_3_missing",
                                             "chain_walker_5", "chain_walker_5_missing"}));
  EXPECT_EQ(fam[3].limb_types, (std::vector<int>{kTorso, kThigh, kShin, kFoot, kThigh}));
  EXPECT_EQ(fam[4].num_nodes, 4);
  EXPECT_EQ(generate_family("chain_mixed", {6}, 5), generate_family("chain_mixed", {6}, 5));
  EXPECT_THROW(generate_family("spider", {3}, 0), std::invalid_argument);
  EXPECT_THROW(generate_family("chain_walker", {1}, 0), std::invalid_argument);
}

// Changing any non-root, propulsive limb's action changes the outcome: each
// limb controls its own joint, so larger robots expose more control inputs.
TEST(Env, EveryPropulsiveJointMatters) {
  const EnvConfig cfg;
  for (int size : {3, 5}) {
    const Morphology m = chain_walker(size);
    int sensitive = 0;
    for (int limb = 0; limb < size; ++limb) {
      EnvState a = reset(m, cfg, 9), b = a;
      std::vector<double> act(static_cast<std::size_t>(size), 0.3);
      step(a, act, m, cfg);
      act[static_cast<std::size_t>(limb)] = -0.3;
      step(b, act, m, cfg);
      if (a.theta != b.theta) ++sensitive;
    }
    EXPECT_EQ(sensitive, size - 1);
  }
}

TEST(Env, OracleBeatsRandomByAWideMargin) {
  const auto ms = generate_family("chain_walker", {3, 4, 5}, 0, false);
  const EnvConfig cfg;
  const EvalReport random = evaluate_random(ms, cfg, 10, kBaselineSeed);
  const EvalReport oracle = evaluate_oracle(ms, cfg, 3, kBaselineSeed);
  EXPECT_GT(random.average, 0.0);
  EXPECT_GT(oracle.average, 5.0 * random.average);
}

TEST(Replay, FifoEviction) {
  ReplayBuffer buf("m", 2, 1, 1, 3);
  for (int i = 0; i < 5; ++i) {
    buf.add(ad::Matrix(2, 1, i), ad::Matrix(2, 1, i), i, ad::Matrix(2, 1, i), false);
  }
  EXPECT_EQ(buf.size(), 3u);
  Rng rng(0);
  const TransitionBatch b = buf.sample(10, rng);
  ASSERT_EQ(b.size, 3u);
  std::multiset<double> rewards(b.rewards.begin(), b.rewards.end());
  EXPECT_EQ(rewards, (std::multiset<double>{2, 3, 4}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.obs(2 * i, 0), b.rewards[i]);
    EXPECT_EQ(b.obs(2 * i + 1, 0), b.rewards[i]);
  }
}

TEST(Replay, BatchesHaveNoRepeats) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(50);
    const std::size_t count = 1 + rng.index(n);
    const auto idx = ReplayBuffer::choose(n, count, rng);
    ASSERT_EQ(idx.size(), count);
    std::set<std::size_t> uniq(idx.begin(), idx.end());
    EXPECT_EQ(uniq.size(), count);
    EXPECT_LT(*uniq.rbegin(), n);
  }
}

TEST(Replay, RejectsMismatchedShapes) {
  ReplayBuffer buf("m", 3, 11, 1, 10);
  EXPECT_THROW(buf.add(ad::Matrix(2, 11), ad::Matrix(3, 1), 0, ad::Matrix(3, 11), false), DimensionError);
  EXPECT_THROW(buf.add(ad::Matrix(3, 11), ad::Matrix(3, 2), 0, ad::Matrix(3, 11), false), DimensionError);
}

TEST(Evaluate, SameSeedSameReport) {
  const auto ms = generate_family("chain_walker", {3, 4}, 0, false);
  const EnvConfig cfg;
  const EvalReport a = evaluate_random(ms, cfg, 4, 7), b = evaluate_random(ms, cfg, 4, 7);
  ASSERT_EQ(a.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.rows[i].returns, b.rows[i].returns);
  EXPECT_EQ(a.average, b.average);
}

TEST(Evaluate, SingleEpisodeHasZeroStderr) {
  EXPECT_EQ(mean_stderr({4.0}).second, 0.0);
  const auto [mean, se] = mean_stderr({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(mean, 2.0);
  EXPECT_DOUBLE_EQ(se, 1.0 / std::sqrt(3.0));
}

TEST(Evaluate, DoublingEpisodesMovesMeanByLessThanThreeStderr) {
  const auto ms = generate_family("chain_walker", {4}, 0, false);
  const EnvConfig cfg;
  const EvalReport a = evaluate_random(ms, cfg, 20, 3), b = evaluate_random(ms, cfg, 40, 3);
  EXPECT_LT(std::abs(a.average - b.average), 3.0 * a.rows[0].stderr_return);
}

TEST(Metrics, AverageRowAndCsvHeader) {
  EvalReport r;
  r.rows = {{"a", 1, 2.0, 0.3, 200, {2.0}}, {"b", 1, 4.0, 0.4, 200, {4.0}}};
  r.average = 3.0;
  const auto rows = metrics_rows(10, r, {{"kl", 0.01}});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].morphology, "average");
  EXPECT_DOUBLE_EQ(rows[2].stderr_return, 0.25);
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,morphology,mean_return,stderr,episode_len,kl");
}
