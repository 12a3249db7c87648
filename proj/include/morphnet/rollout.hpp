#pragma once

// Episode evaluation. All episodes of one morphology run in lockstep so a
// network policy needs one batched forward per time step.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphnet/env.hpp"
#include "morphnet/gcnt.hpp"

namespace morphnet {

/// Maps stacked observations of `batch` episodes ((batch·K) × obs_dim) to
/// (batch·K) actions.
using BatchPolicy =
    std::function<std::vector<double>(const Morphology& m, const ad::Matrix& obs, std::size_t batch, Rng& rng)>;

struct MorphologyReport {
  std::string morphology;
  int episodes = 0;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  double mean_length = 0.0;
  std::vector<double> returns;
};

struct EvalReport {
  std::vector<MorphologyReport> rows;
  /// Mean of the per-morphology means.
  double average = 0.0;

  const MorphologyReport* find(const std::string& name) const;
};

/// Mean and standard error (0 for a single sample).
std::pair<double, double> mean_stderr(const std::vector<double>& xs);

/// Reset seed of episode `episode` of morphology `name` under `seed`.
std::uint64_t episode_seed(std::uint64_t seed, const std::string& name, int episode);

EvalReport evaluate_policy(const std::vector<Morphology>& ms, const EnvConfig& env, int episodes, std::uint64_t seed,
                           const BatchPolicy& policy);

/// Deterministic-mode rollouts of the actor.
EvalReport evaluate(GcntNetwork& actor, const std::vector<Morphology>& ms, const EnvConfig& env, int episodes,
                    std::uint64_t seed);

/// Uniform actions in [−1, 1].
EvalReport evaluate_random(const std::vector<Morphology>& ms, const EnvConfig& env, int episodes, std::uint64_t seed);

EvalReport evaluate_oracle(const std::vector<Morphology>& ms, const EnvConfig& env, int episodes, std::uint64_t seed);

/// Seed used for every recorded random-policy baseline.
inline constexpr std::uint64_t kBaselineSeed = 20240901;

// ---- metrics --------------------------------------------------------------

struct MetricsRow {
  std::int64_t step = 0;
  std::string morphology;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  double episode_len = 0.0;
  std::vector<std::pair<std::string, double>> diagnostics;
};

/// One row per morphology plus an "average" row, all carrying `diagnostics`.
std::vector<MetricsRow> metrics_rows(std::int64_t step, const EvalReport& report,
                                     const std::vector<std::pair<std::string, double>>& diagnostics);

/// CSV text: step,morphology,mean_return,stderr,episode_len followed by the
/// diagnostic names of the first row.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

}  // namespace morphnet
