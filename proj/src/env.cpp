#include "morphnet/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphnet {

void EnvConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("env.dt must be positive");
  if (episode_len < 1) throw std::invalid_argument("env.episode_len must be >= 1");
  if (!(joint_range > 0.0)) throw std::invalid_argument("env.joint_range must be positive");
  if (!(omega_max > 0.0)) throw std::invalid_argument("env.omega_max must be positive");
  if (ctrl_cost < 0.0 || damping < 0.0) throw std::invalid_argument("env.ctrl_cost and env.damping must be >= 0");
  if (max_gear() <= 0.0) throw std::invalid_argument("env.gear needs a positive entry");
}

double EnvConfig::max_gear() const { return *std::max_element(gear.begin(), gear.end()); }

double EnvConfig::max_propulsion() const {
  double c = 0.0;
  for (double v : propulsion) c = std::max(c, std::abs(v));
  return c;
}

int observation_dim() { return kNumLimbTypes + 6; }

EnvState reset(const Morphology& m, const EnvConfig& cfg, std::uint64_t seed) {
  (void)cfg;
  Rng rng(seed);
  EnvState s;
  const auto k = static_cast<std::size_t>(m.num_nodes);
  s.theta.assign(k, 0.0);
  s.theta_dot.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double th = rng.uniform(-0.1, 0.1);
    if (static_cast<int>(i) != m.root) s.theta[i] = th;
  }
  return s;
}

StepResult step(EnvState& s, std::span<const double> actions, const Morphology& m, const EnvConfig& cfg) {
  const auto k = static_cast<std::size_t>(m.num_nodes);
  if (actions.size() != k) {
    throw DimensionError("step: expected " + std::to_string(k) + " actions, got " + std::to_string(actions.size()));
  }
  StepResult out;
  double v = 0.0;
  double cost = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (static_cast<int>(i) == m.root) continue;
    double a = actions[i];
    if (!(a >= -1.0 && a <= 1.0)) {
      ++out.clamped_actions;
      a = std::isnan(a) ? 0.0 : std::clamp(a, -1.0, 1.0);
    }
    const auto type = static_cast<std::size_t>(m.limb_types[i]);
    double w = s.theta_dot[i] + cfg.dt * (cfg.gear[type] * a - cfg.damping * s.theta_dot[i]);
    w = std::clamp(w, -cfg.omega_max, cfg.omega_max);
    const double th = std::clamp(s.theta[i] + cfg.dt * w, -cfg.joint_range, cfg.joint_range);
    s.theta_dot[i] = w;
    s.theta[i] = th;
    v += cfg.propulsion[type] * std::sin(th) * w;
    cost += a * a;
  }
  s.x += cfg.dt * v;
  ++s.t;
  out.reward = cfg.dt * v - cfg.ctrl_cost * cost;
  out.done = s.t >= cfg.episode_len;
  return out;
}

ad::Matrix observe(const EnvState& s, const Morphology& m, const EnvConfig& cfg) {
  return observe(s, m, cfg, depths(m));
}

ad::Matrix observe(const EnvState& s, const Morphology& m, const EnvConfig& cfg, const std::vector<int>& depth) {
  const auto k = static_cast<std::size_t>(m.num_nodes);
  ad::Matrix obs(k, static_cast<std::size_t>(observation_dim()));
  const double g_max = cfg.max_gear();
  for (std::size_t i = 0; i < k; ++i) {
    const auto type = static_cast<std::size_t>(m.limb_types[i]);
    const double th = s.theta[i];
    obs(i, type) = 1.0;
    std::size_t c = kNumLimbTypes;
    obs(i, c++) = std::sin(th);
    obs(i, c++) = std::cos(th);
    obs(i, c++) = s.theta_dot[i] / cfg.omega_max;
    obs(i, c++) = (th + cfg.joint_range) / (2.0 * cfg.joint_range);
    obs(i, c++) = static_cast<double>(depth[i]) / static_cast<double>(k);
    obs(i, c++) = cfg.gear[type] / g_max;
  }
  return obs;
}

std::vector<double> oracle_action(const EnvState& s, const Morphology& m, const EnvConfig& cfg) {
  std::vector<double> a(static_cast<std::size_t>(m.num_nodes), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (static_cast<int>(i) == m.root) continue;
    if (cfg.propulsion[static_cast<std::size_t>(m.limb_types[i])] > 0.0) a[i] = s.theta[i] >= 0.0 ? 1.0 : -1.0;
  }
  return a;
}

namespace {

Morphology path(const std::string& name, std::vector<int> types) {
  std::vector<Edge> edges;
  for (int i = 1; i < static_cast<int>(types.size()); ++i) edges.emplace_back(i - 1, i);
  return Morphology::make(name, std::move(types), std::move(edges), 0);
}

}  // namespace

Morphology chain_walker(int size) {
  if (size < 2) throw std::invalid_argument("chain size must be >= 2");
  std::vector<int> types{kTorso};
  for (int i = 1; i < size; ++i) types.push_back(kThigh + (i - 1) % 3);
  return path("chain_walker_" + std::to_string(size), std::move(types));
}

std::vector<Morphology> generate_family(const std::string& kind, const std::vector<int>& sizes, std::uint64_t seed,
                                        bool with_missing) {
  if (kind != "chain_walker" && kind != "chain_mixed") throw std::invalid_argument("unknown family: " + kind);
  Rng rng(seed);
  std::vector<Morphology> out;
  for (int n : sizes) {
    if (n < 2) throw std::invalid_argument("chain size must be >= 2, got " + std::to_string(n));
    std::vector<int> types{kTorso};
    for (int i = 1; i < n; ++i) {
      if (kind == "chain_walker") {
        types.push_back(kThigh + (i - 1) % 3);
      } else {
        types.push_back(kThigh + static_cast<int>(rng.index(4)));
      }
    }
    const std::string name = kind + "_" + std::to_string(n);
    out.push_back(path(name, types));
    if (with_missing && n >= 3) {
      types.pop_back();
      out.push_back(path(name + "_missing", types));
    }
  }
  return out;
}

}  // namespace morphnet
