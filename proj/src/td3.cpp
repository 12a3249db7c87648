#include "morphnet/td3.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphnet {

void Td3Config::validate() const {
  if (batch < 1) throw std::invalid_argument("td3.batch must be >= 1");
  if (policy_update_interval < 1) throw std::invalid_argument("td3.policy_update_interval must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("td3.tau must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("td3.gamma must lie in [0, 1]");
  if (policy_noise < 0.0 || noise_clip < 0.0 || explore_sigma < 0.0) {
    throw std::invalid_argument("td3 noise scales must be >= 0");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("td3.lr must be positive");
  if (buffer_capacity < 1) throw std::invalid_argument("td3.buffer_capacity must be >= 1");
  if (updates_per_episode < 0) throw std::invalid_argument("td3.updates_per_episode must be >= 0");
  if (initial_explore_steps < 0) throw std::invalid_argument("td3.initial_explore_steps must be >= 0");
}

namespace {

GcntConfig for_env(GcntConfig net) {
  net.obs_dim = observation_dim();
  return net;
}

std::vector<ad::Parameter*> joint_params(GcntNetwork& a, GcntNetwork& b) {
  std::vector<ad::Parameter*> out = a.params().all();
  const auto more = b.params().all();
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

}  // namespace

Td3Trainer::Td3Trainer(std::vector<Morphology> ms, EnvConfig env, Td3Config cfg, GcntConfig net, std::uint64_t seed)
    : ms_(std::move(ms)),
      env_(env),
      cfg_(cfg),
      net_(for_env(std::move(net))),
      seed_(seed),
      actor_(net_, NetworkRole::kActor, derive_seed(seed, 1)),
      q1_(net_, NetworkRole::kCritic, derive_seed(seed, 2)),
      q2_(net_, NetworkRole::kCritic, derive_seed(seed, 3)),
      actor_target_(actor_),
      q1_target_(q1_),
      q2_target_(q2_),
      actor_opt_(ad::AdamOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip}),
      critic_opt_(ad::AdamOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip}),
      cache_(net_),
      explore_rng_(derive_seed(seed, 4)),
      sample_rng_(derive_seed(seed, 5)) {
  if (ms_.empty()) throw std::invalid_argument("td3: at least one morphology is required");
  env_.validate();
  cfg_.validate();
  for (const auto& m : ms_) {
    for (const auto& b : buffers_) {
      if (b.morphology() == m.name) throw std::invalid_argument("td3: duplicate morphology " + m.name);
    }
    cache_.get(m);
    buffers_.emplace_back(m.name, static_cast<std::size_t>(m.num_nodes), static_cast<std::size_t>(net_.obs_dim),
                          static_cast<std::size_t>(net_.action_dim), cfg_.buffer_capacity);
  }
}

ReplayBuffer& Td3Trainer::buffer(const std::string& name) {
  for (auto& b : buffers_) {
    if (b.morphology() == name) return b;
  }
  throw std::out_of_range("no replay buffer for " + name);
}

void Td3Trainer::run_episode(std::size_t index) {
  const Morphology& m = ms_[index];
  const MorphologyEncoding& enc = cache_.get(m);
  const std::vector<int> depth = depths(m);
  const auto k = static_cast<std::size_t>(m.num_nodes);
  EnvState s = reset(m, env_, derive_seed(seed_, 1000 + static_cast<std::uint64_t>(episodes_)));
  ++episodes_;
  ad::Matrix obs = observe(s, m, env_, depth);
  for (;;) {
    ad::Matrix actions(k, static_cast<std::size_t>(net_.action_dim));
    if (steps_ < cfg_.initial_explore_steps) {
      for (std::size_t i = 0; i < actions.size(); ++i) actions[i] = explore_rng_.uniform(-1.0, 1.0);
      for (std::size_t i = 0; i < actions.size(); ++i) actions[i] *= enc.action_mask[i];
    } else {
      actions = actor_act(actor_, enc, obs, 1, ActMode::kTd3Explore, explore_rng_, cfg_.explore_sigma).actions;
    }
    const StepResult r = step(s, actions.values(), m, env_);
    diag_.clamped_actions += r.clamped_actions;
    ad::Matrix next = observe(s, m, env_, depth);
    // Episodes only end on the time limit, which is not a terminal state, so
    // the stored flag stays false and targets keep bootstrapping.
    buffers_[index].add(obs, actions, r.reward, next, false);
    ++steps_;
    obs = std::move(next);
    if (r.done) break;
  }
}

void Td3Trainer::update(const ReplayBuffer& buffer) {
  if (buffer.size() == 0) {
    ++diag_.skipped_updates;
    return;
  }
  const Morphology* morph = nullptr;
  for (const auto& m : ms_) {
    if (m.name == buffer.morphology()) morph = &m;
  }
  if (!morph) throw std::invalid_argument("td3: buffer for unknown morphology " + buffer.morphology());
  const MorphologyEncoding& enc = cache_.get(*morph);
  const TransitionBatch batch = buffer.sample(static_cast<std::size_t>(cfg_.batch), sample_rng_);
  const std::size_t b = batch.size;

  // Targets with clipped smoothing noise on the target policy's action.
  ad::Matrix y(b, 1);
  {
    ActionSample next = actor_act(actor_target_, enc, batch.next_obs, b, ActMode::kDeterministic, sample_rng_);
    const ad::Matrix mask = tile_rows(enc.action_mask, b);
    for (std::size_t i = 0; i < next.actions.size(); ++i) {
      const double noise = std::clamp(cfg_.policy_noise * sample_rng_.normal(), -cfg_.noise_clip, cfg_.noise_clip);
      next.actions[i] = std::clamp(next.actions[i] + noise, -1.0, 1.0) * mask[i];
    }
    ad::Tape t(false);
    const ad::Var a = t.constant(next.actions);
    const ad::Matrix& t1 = critic_value(q1_target_.bind(t, false), q1_target_, enc, batch.next_obs, a, b).value();
    const ad::Matrix& t2 = critic_value(q2_target_.bind(t, false), q2_target_, enc, batch.next_obs, a, b).value();
    for (std::size_t i = 0; i < b; ++i) {
      y[i] = batch.rewards[i] + cfg_.gamma * (1.0 - batch.dones[i]) * std::min(t1[i], t2[i]);
    }
  }

  {
    ad::Tape tape;
    const ad::Var a = tape.constant(batch.actions);
    const ad::Var target = tape.constant(y);
    const ad::Var d1 = ad::sub(critic_value(q1_.bind(tape), q1_, enc, batch.obs, a, b), target);
    const ad::Var d2 = ad::sub(critic_value(q2_.bind(tape), q2_, enc, batch.obs, a, b), target);
    const ad::Var loss = ad::add(ad::mean(ad::mul(d1, d1)), ad::mean(ad::mul(d2, d2)));
    const double l = loss.value()[0];
    if (!std::isfinite(l)) throw DivergenceError("td3: non-finite critic loss on " + morph->name);
    tape.backward(loss);
    critic_opt_.step(joint_params(q1_, q2_));
    ++diag_.critic_updates;
    diag_.last_critic_loss = l;
    critic_loss_sum_ += l;
    ++critic_loss_count_;
  }

  if (diag_.critic_updates % cfg_.policy_update_interval != 0) return;
  {
    ad::Tape tape;
    const ad::Var a = actor_action(actor_.bind(tape), actor_, enc, batch.obs, b);
    const ad::Var q = critic_value(q1_.bind(tape, false), q1_, enc, batch.obs, a, b);
    const ad::Var loss = ad::scale(ad::mean(q), -1.0);
    const double l = loss.value()[0];
    if (!std::isfinite(l)) throw DivergenceError("td3: non-finite actor loss on " + morph->name);
    tape.backward(loss);
    actor_opt_.step(actor_.params().all());
    ++diag_.actor_updates;
    diag_.last_actor_loss = l;
  }
  actor_.polyak_into(actor_target_, cfg_.tau);
  q1_.polyak_into(q1_target_, cfg_.tau);
  q2_.polyak_into(q2_target_, cfg_.tau);
}

void Td3Trainer::round() {
  for (std::size_t i = 0; i < ms_.size(); ++i) run_episode(i);
  for (const auto& buf : buffers_) {
    for (int u = 0; u < cfg_.updates_per_episode; ++u) update(buf);
  }
}

std::vector<MetricsRow> Td3Trainer::train(const TrainSchedule& schedule) {
  std::vector<MetricsRow> rows;
  std::int64_t next_eval = schedule.eval_interval > 0 ? schedule.eval_interval : schedule.total_steps;
  std::int64_t last_logged = -1;
  auto log = [&]() {
    const EvalReport report = evaluate(actor_, ms_, env_, schedule.eval_episodes, schedule.eval_seed);
    const double mean_loss = critic_loss_count_ > 0 ? critic_loss_sum_ / static_cast<double>(critic_loss_count_) : 0.0;
    critic_loss_sum_ = 0.0;
    critic_loss_count_ = 0;
    const auto diag = std::vector<std::pair<std::string, double>>{
        {"critic_loss", mean_loss},
        {"actor_loss", diag_.last_actor_loss},
        {"critic_updates", static_cast<double>(diag_.critic_updates)},
        {"skipped_updates", static_cast<double>(diag_.skipped_updates)},
    };
    for (auto& r : metrics_rows(steps_, report, diag)) rows.push_back(std::move(r));
    last_logged = steps_;
  };
  while (steps_ < schedule.total_steps) {
    round();
    if (steps_ >= next_eval) {
      log();
      while (next_eval <= steps_) next_eval += std::max<std::int64_t>(1, schedule.eval_interval);
    }
  }
  if (last_logged != steps_) log();
  return rows;
}

}  // namespace morphnet
