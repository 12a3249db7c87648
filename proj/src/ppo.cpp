#include "morphnet/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace morphnet {

void PpoConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("ppo.gamma and ppo.lambda must lie in [0, 1]");
  }
  if (epochs < 1 || batch < 1 || minibatches < 1) throw std::invalid_argument("ppo epochs/batch/minibatches must be >= 1");
  if (!(batch_divisor > 0.0)) throw std::invalid_argument("ppo.batch_divisor must be positive");
  if (!(clip > 0.0)) throw std::invalid_argument("ppo.clip must be positive");
  if (value_coef < 0.0 || early_stop_kl < 0.0) throw std::invalid_argument("ppo.value_coef and early_stop_kl must be >= 0");
  if (warmup_iterations < 0) throw std::invalid_argument("ppo.warmup_iterations must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("ppo.lr must be positive");
  if (!(sampling_floor > 0.0)) throw std::invalid_argument("ppo.sampling_floor must be positive");
}

int PpoConfig::steps_per_iteration() const {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(batch) / batch_divisor)));
}

GaeResult gae_advantages(const std::vector<double>& rewards, const std::vector<double>& values,
                         const std::vector<double>& dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1 || dones.size() != n) {
    throw DimensionError("gae: need rewards[n], values[n+1], dones[n]");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = 1.0 - dones[i];
    const double delta = rewards[i] + gamma * live * values[i + 1] - values[i];
    next = delta + gamma * lambda * live * next;
    out.advantages[i] = next;
    out.returns[i] = next + values[i];
  }
  return out;
}

std::vector<double> sampling_prob_update(const std::vector<double>& mean_episode_lens, int max_episode_len,
                                         double floor) {
  std::vector<double> p;
  double total = 0.0;
  for (double len : mean_episode_lens) {
    p.push_back(std::max(floor, static_cast<double>(max_episode_len) - len + 1.0));
    total += p.back();
  }
  for (double& v : p) v /= total;
  return p;
}

double ppo_learning_rate(double base, int iteration, int warmup, int total) {
  if (iteration < warmup) return base * static_cast<double>(iteration + 1) / static_cast<double>(warmup);
  const double span = static_cast<double>(std::max(1, total - warmup));
  const double progress = std::min(1.0, static_cast<double>(iteration - warmup) / span);
  return base * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double approx_kl(const std::vector<double>& log_ratio) {
  if (log_ratio.empty()) return 0.0;
  double s = 0.0;
  for (double lr : log_ratio) s += std::expm1(lr) - lr;
  return s / static_cast<double>(log_ratio.size());
}

PpoTrainer::PpoTrainer(std::vector<Morphology> ms, EnvConfig env, PpoConfig cfg, GcntConfig net, std::uint64_t seed)
    : ms_(std::move(ms)),
      env_(env),
      cfg_(cfg),
      net_([&net] {
        net.obs_dim = observation_dim();
        return net;
      }()),
      seed_(seed),
      actor_(net_, NetworkRole::kActor, derive_seed(seed, 1), true),
      value_(net_, NetworkRole::kValue, derive_seed(seed, 2)),
      opt_(ad::AdamOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip}),
      cache_(net_),
      rng_(derive_seed(seed, 4)) {
  if (ms_.empty()) throw std::invalid_argument("ppo: at least one morphology is required");
  env_.validate();
  cfg_.validate();
  for (const auto& m : ms_) cache_.get(m);
  probs_.assign(ms_.size(), 1.0 / static_cast<double>(ms_.size()));
  len_sum_.assign(ms_.size(), 0.0);
  len_count_.assign(ms_.size(), 0.0);
}

std::vector<PpoSample> PpoTrainer::collect() {
  const int per_iter = cfg_.steps_per_iteration();
  const int episodes = std::max(1, (per_iter + env_.episode_len - 1) / env_.episode_len);
  std::vector<int> counts(ms_.size(), 0);
  for (int e = 0; e < episodes; ++e) {
    const double u = rng_.uniform();
    double acc = 0.0;
    std::size_t pick = ms_.size() - 1;
    for (std::size_t i = 0; i < ms_.size(); ++i) {
      acc += probs_[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    ++counts[pick];
  }

  std::vector<PpoSample> samples;
  const auto obs_dim = static_cast<std::size_t>(net_.obs_dim);
  for (std::size_t mi = 0; mi < ms_.size(); ++mi) {
    const auto c = static_cast<std::size_t>(counts[mi]);
    if (c == 0) continue;
    const Morphology& m = ms_[mi];
    const MorphologyEncoding& enc = cache_.get(m);
    const auto k = static_cast<std::size_t>(m.num_nodes);
    const std::vector<int> depth = depths(m);
    std::vector<EnvState> states;
    for (std::size_t e = 0; e < c; ++e) {
      states.push_back(reset(m, env_, derive_seed(seed_, 1000 + static_cast<std::uint64_t>(episodes_++))));
    }
    std::vector<std::vector<PpoSample>> eps(c);
    std::vector<std::vector<double>> rewards(c), values(c), dones(c);
    std::vector<bool> finished(c, false);
    ad::Matrix obs(c * k, obs_dim);
    auto gather = [&]() {
      for (std::size_t e = 0; e < c; ++e) {
        const ad::Matrix o = observe(states[e], m, env_, depth);
        std::copy(o.data(), o.data() + o.size(), obs.data() + e * k * obs_dim);
      }
    };
    auto value_of = [&]() {
      ad::Tape t(false);
      return critic_value(value_.bind(t, false), value_, enc, obs, std::nullopt, c).value();
    };
    gather();
    for (int t = 0; t < env_.episode_len; ++t) {
      const ActionSample a = actor_act(actor_, enc, obs, c, ActMode::kPpoSample, rng_);
      const ad::Matrix v = value_of();
      for (std::size_t e = 0; e < c; ++e) {
        if (finished[e]) continue;
        PpoSample s;
        s.morph = mi;
        s.obs = ad::Matrix(k, obs_dim, std::vector<double>(obs.data() + e * k * obs_dim, obs.data() + (e + 1) * k * obs_dim));
        const std::size_t ad_ = a.pre_tanh.cols();
        s.pre_tanh = ad::Matrix(k, ad_, std::vector<double>(a.pre_tanh.data() + e * k * ad_,
                                                          a.pre_tanh.data() + (e + 1) * k * ad_));
        s.log_prob = a.log_prob[e];
        const StepResult r =
            step(states[e], std::span<const double>(a.actions.data() + e * k * ad_, k * ad_), m, env_);
        eps[e].push_back(std::move(s));
        rewards[e].push_back(r.reward);
        values[e].push_back(v[e]);
        // Time-limit ends are not terminal; the final state is bootstrapped.
        dones[e].push_back(0.0);
        if (r.done) finished[e] = true;
        ++steps_;
      }
      gather();
      if (std::all_of(finished.begin(), finished.end(), [](bool f) { return f; })) break;
    }
    const ad::Matrix last = value_of();
    for (std::size_t e = 0; e < c; ++e) {
      values[e].push_back(last[e]);
      const GaeResult g = gae_advantages(rewards[e], values[e], dones[e], cfg_.gamma, cfg_.lambda);
      for (std::size_t t = 0; t < eps[e].size(); ++t) {
        eps[e][t].advantage = g.advantages[t];
        eps[e][t].ret = g.returns[t];
        samples.push_back(std::move(eps[e][t]));
      }
      len_sum_[mi] += static_cast<double>(rewards[e].size());
      len_count_[mi] += 1.0;
    }
  }

  double mean = 0.0;
  for (const auto& s : samples) mean += s.advantage;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
  const double sd = std::sqrt(var / static_cast<double>(samples.size()));
  for (auto& s : samples) s.advantage = (s.advantage - mean) / (sd + 1e-8);
  return samples;
}

namespace {

struct Group {
  std::size_t morph = 0;
  std::vector<std::size_t> members;
};

std::vector<Group> group_by_morphology(const std::vector<PpoSample>& samples, std::span<const std::size_t> idx) {
  std::vector<Group> groups;
  for (std::size_t i : idx) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.morph == samples[i].morph; });
    if (it == groups.end()) {
      groups.push_back({samples[i].morph, {}});
      it = groups.end() - 1;
    }
    it->members.push_back(i);
  }
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.morph < b.morph; });
  return groups;
}

ad::Matrix stack(const std::vector<PpoSample>& samples, const std::vector<std::size_t>& members,
                 ad::Matrix PpoSample::*field) {
  const ad::Matrix& first = samples[members.front()].*field;
  ad::Matrix out(first.rows() * members.size(), first.cols());
  for (std::size_t j = 0; j < members.size(); ++j) {
    const ad::Matrix& m = samples[members[j]].*field;
    std::copy(m.data(), m.data() + m.size(), out.data() + j * m.size());
  }
  return out;
}

}  // namespace

std::vector<double> PpoTrainer::current_log_probs(const std::vector<PpoSample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> out(samples.size());
  for (const Group& g : group_by_morphology(samples, idx)) {
    ad::Tape tape(false);
    const ad::Matrix lp =
        actor_log_prob(actor_.bind(tape, false), actor_, cache_.get(ms_[g.morph]), stack(samples, g.members, &PpoSample::obs),
                       stack(samples, g.members, &PpoSample::pre_tanh), g.members.size())
            .value();
    for (std::size_t j = 0; j < g.members.size(); ++j) out[g.members[j]] = lp[j];
  }
  return out;
}

void PpoTrainer::optimize(std::vector<PpoSample> samples, double lr) {
  const std::size_t n = samples.size();
  if (n == 0) return;
  const std::size_t mb = (n + static_cast<std::size_t>(cfg_.minibatches) - 1) / static_cast<std::size_t>(cfg_.minibatches);
  std::vector<ad::Parameter*> params = actor_.params().all();
  for (auto* p : value_.params().all()) params.push_back(p);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::int64_t minibatch = 0;
  double clip_hits = 0.0;
  double clip_total = 0.0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng_.index(i)]);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      ad::Tape tape;
      const ParamBinding ba = actor_.bind(tape);
      const ParamBinding bv = value_.bind(tape);
      std::optional<ad::Var> total;
      std::vector<double> log_ratio;
      for (const Group& g : group_by_morphology(samples, idx)) {
        const std::size_t b = g.members.size();
        const MorphologyEncoding& enc = cache_.get(ms_[g.morph]);
        const ad::Matrix obs = stack(samples, g.members, &PpoSample::obs);
        ad::Matrix old_lp(b, 1), adv(b, 1), ret(b, 1);
        for (std::size_t j = 0; j < b; ++j) {
          old_lp[j] = samples[g.members[j]].log_prob;
          adv[j] = samples[g.members[j]].advantage;
          ret[j] = samples[g.members[j]].ret;
        }
        const ad::Var lp = actor_log_prob(ba, actor_, enc, obs, stack(samples, g.members, &PpoSample::pre_tanh), b);
        const ad::Var ratio = ad::exp(ad::sub(lp, tape.constant(old_lp)));
        const ad::Var a = tape.constant(adv);
        const ad::Var surrogate =
            ad::minimum(ad::mul(ratio, a), ad::mul(ad::clamp(ratio, 1.0 - cfg_.clip, 1.0 + cfg_.clip), a));
        const ad::Var v = critic_value(bv, value_, enc, obs, std::nullopt, b);
        const ad::Var dv = ad::sub(v, tape.constant(ret));
        const ad::Var loss =
            ad::add(ad::scale(ad::sum(surrogate), -1.0), ad::scale(ad::sum(ad::mul(dv, dv)), cfg_.value_coef));
        total = total ? ad::add(*total, loss) : loss;
        for (std::size_t j = 0; j < b; ++j) {
          const double r = ratio.value()[j];
          log_ratio.push_back(lp.value()[j] - old_lp[j]);
          clip_hits += std::abs(r - 1.0) > cfg_.clip ? 1.0 : 0.0;
          clip_total += 1.0;
        }
      }
      const double kl = approx_kl(log_ratio);
      diag_.last_kl = kl;
      // The first minibatch always updates: its policy equals the one that
      // collected the data, so only later minibatches can have drifted.
      if (minibatch > 0 && kl > cfg_.early_stop_kl) {
        ++diag_.early_stops;
        diag_.last_clip_frac = clip_total > 0.0 ? clip_hits / clip_total : 0.0;
        return;
      }
      const ad::Var loss = ad::scale(*total, 1.0 / static_cast<double>(idx.size()));
      const double l = loss.value()[0];
      if (!std::isfinite(l)) throw DivergenceError("ppo: non-finite loss");
      tape.backward(loss);
      opt_.step(params, lr);
      ++minibatch;
      ++diag_.minibatch_updates;
    }
  }
  diag_.last_clip_frac = clip_total > 0.0 ? clip_hits / clip_total : 0.0;
}

std::vector<MetricsRow> PpoTrainer::train(const TrainSchedule& schedule) {
  const int per_iter = cfg_.steps_per_iteration();
  const int episodes = std::max(1, (per_iter + env_.episode_len - 1) / env_.episode_len);
  const std::int64_t per_iter_steps = static_cast<std::int64_t>(episodes) * env_.episode_len;
  const int iterations =
      static_cast<int>(std::max<std::int64_t>(1, (schedule.total_steps + per_iter_steps - 1) / per_iter_steps));

  std::vector<MetricsRow> rows;
  std::int64_t next_eval = schedule.eval_interval > 0 ? schedule.eval_interval : schedule.total_steps;
  std::int64_t last_logged = -1;
  auto log = [&]() {
    const EvalReport report = evaluate(actor_, ms_, env_, schedule.eval_episodes, schedule.eval_seed);
    const auto diag = std::vector<std::pair<std::string, double>>{
        {"kl", diag_.last_kl},
        {"clip_frac", diag_.last_clip_frac},
        {"early_stops", static_cast<double>(diag_.early_stops)},
    };
    for (auto& r : metrics_rows(steps_, report, diag)) rows.push_back(std::move(r));
    last_logged = steps_;
  };
  for (int it = 0; it < iterations && steps_ < schedule.total_steps; ++it) {
    std::vector<PpoSample> samples = collect();
    optimize(std::move(samples), ppo_learning_rate(cfg_.lr, it, cfg_.warmup_iterations, iterations));
    ++diag_.iterations;
    if (it + 1 >= cfg_.warmup_iterations) {
      std::vector<double> lens(ms_.size());
      for (std::size_t i = 0; i < ms_.size(); ++i) {
        lens[i] = len_count_[i] > 0.0 ? len_sum_[i] / len_count_[i] : static_cast<double>(env_.episode_len);
      }
      probs_ = sampling_prob_update(lens, env_.episode_len, cfg_.sampling_floor);
      std::fill(len_sum_.begin(), len_sum_.end(), 0.0);
      std::fill(len_count_.begin(), len_count_.end(), 0.0);
    }
    if (steps_ >= next_eval) {
      log();
      while (next_eval <= steps_) next_eval += std::max<std::int64_t>(1, schedule.eval_interval);
    }
  }
  if (last_logged != steps_) log();
  return rows;
}

}  // namespace morphnet
