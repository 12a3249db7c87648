#include "morphnet/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "morphnet/wl.hpp"

namespace morphnet {

const MorphologyReport* EvalReport::find(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.morphology == name) return &r;
  }
  return nullptr;
}

std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double n = static_cast<double>(xs.size());
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::uint64_t episode_seed(std::uint64_t seed, const std::string& name, int episode) {
  return derive_seed(derive_seed(seed, fnv1a64(name)), static_cast<std::uint64_t>(episode));
}

EvalReport evaluate_policy(const std::vector<Morphology>& ms, const EnvConfig& env, int episodes, std::uint64_t seed,
                           const BatchPolicy& policy) {
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
  EvalReport report;
  for (const auto& m : ms) {
    const auto k = static_cast<std::size_t>(m.num_nodes);
    const auto n = static_cast<std::size_t>(episodes);
    const std::vector<int> depth = depths(m);
    std::vector<EnvState> states;
    for (int e = 0; e < episodes; ++e) states.push_back(reset(m, env, episode_seed(seed, m.name, e)));
    Rng rng(derive_seed(seed ^ 0x5bd1e995ULL, fnv1a64(m.name)));
    std::vector<double> returns(n, 0.0);
    std::vector<double> lengths(n, 0.0);
    std::vector<bool> done(n, false);
    const auto obs_dim = static_cast<std::size_t>(observation_dim());
    ad::Matrix obs(n * k, obs_dim);
    for (int t = 0; t < env.episode_len; ++t) {
      for (std::size_t e = 0; e < n; ++e) {
        const ad::Matrix o = observe(states[e], m, env, depth);
        std::copy(o.data(), o.data() + o.size(), obs.data() + e * k * obs_dim);
      }
      const std::vector<double> actions = policy(m, obs, n, rng);
      for (std::size_t e = 0; e < n; ++e) {
        if (done[e]) continue;
        const StepResult r = step(states[e], std::span<const double>(actions.data() + e * k, k), m, env);
        returns[e] += r.reward;
        lengths[e] += 1.0;
        done[e] = r.done;
      }
    }
    MorphologyReport row;
    row.morphology = m.name;
    row.episodes = episodes;
    std::tie(row.mean_return, row.stderr_return) = mean_stderr(returns);
    row.mean_length = mean_stderr(lengths).first;
    row.returns = returns;
    report.rows.push_back(std::move(row));
  }
  for (const auto& r : report.rows) report.average += r.mean_return;
  if (!report.rows.empty()) report.average /= static_cast<double>(report.rows.size());
  return report;
}

EvalReport evaluate(GcntNetwork& actor, const std::vector<Morphology>& ms, const EnvConfig& env, int episodes,
                    std::uint64_t seed) {
  EncodingCache cache(actor.config());
  return evaluate_policy(ms, env, episodes, seed,
                         [&](const Morphology& m, const ad::Matrix& obs, std::size_t batch, Rng& rng) {
                           const ActionSample s =
                               actor_act(actor, cache.get(m), obs, batch, ActMode::kDeterministic, rng);
                           return std::vector<double>(s.actions.values().begin(), s.actions.values().end());
                         });
}

EvalReport evaluate_random(const std::vector<Morphology>& ms, const EnvConfig& env, int episodes,
                           std::uint64_t seed) {
  return evaluate_policy(ms, env, episodes, seed,
                         [](const Morphology&, const ad::Matrix& obs, std::size_t, Rng& rng) {
                           std::vector<double> a(obs.rows());
                           for (auto& v : a) v = rng.uniform(-1.0, 1.0);
                           return a;
                         });
}

EvalReport evaluate_oracle(const std::vector<Morphology>& ms, const EnvConfig& env, int episodes,
                           std::uint64_t seed) {
  return evaluate_policy(ms, env, episodes, seed,
                         [&env](const Morphology& m, const ad::Matrix& obs, std::size_t batch, Rng&) {
                           // The oracle only needs θ, which the observation carries as sin θ.
                           const auto k = static_cast<std::size_t>(m.num_nodes);
                           std::vector<double> a(obs.rows(), 0.0);
                           for (std::size_t b = 0; b < batch; ++b) {
                             for (std::size_t i = 0; i < k; ++i) {
                               if (static_cast<int>(i) == m.root) continue;
                               const auto type = static_cast<std::size_t>(m.limb_types[i]);
                               if (env.propulsion[type] <= 0.0) continue;
                               a[b * k + i] = obs(b * k + i, kNumLimbTypes) >= 0.0 ? 1.0 : -1.0;
                             }
                           }
                           return a;
                         });
}

std::vector<MetricsRow> metrics_rows(std::int64_t step, const EvalReport& report,
                                     const std::vector<std::pair<std::string, double>>& diagnostics) {
  std::vector<MetricsRow> out;
  double len = 0.0;
  for (const auto& r : report.rows) {
    out.push_back({step, r.morphology, r.mean_return, r.stderr_return, r.mean_length, diagnostics});
    len += r.mean_length;
  }
  const double n = std::max<double>(1.0, static_cast<double>(report.rows.size()));
  // The stderr of the average treats morphologies as independent.
  double var = 0.0;
  for (const auto& r : report.rows) var += r.stderr_return * r.stderr_return;
  out.push_back({step, "average", report.average, std::sqrt(var) / n, len / n, diagnostics});
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,morphology,mean_return,stderr,episode_len";
  if (!rows.empty()) {
    for (const auto& [name, value] : rows.front().diagnostics) out += "," + name;
  }
  out += "\n";
  char buf[32];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + r.morphology + "," + num(r.mean_return) + "," + num(r.stderr_return) + "," +
           num(r.episode_len);
    for (const auto& [name, value] : r.diagnostics) out += "," + num(value);
    out += "\n";
  }
  return out;
}

}  // namespace morphnet
