#pragma once

// Experiment configuration and the commands behind the morphnet CLI.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "morphnet/checkpoint.hpp"
#include "morphnet/config.hpp"
#include "morphnet/env.hpp"
#include "morphnet/gcnt.hpp"
#include "morphnet/ppo.hpp"
#include "morphnet/rollout.hpp"
#include "morphnet/td3.hpp"

namespace morphnet {

struct ExperimentConfig {
  std::string name = "experiment";
  std::string trainer = "td3";
  /// Morphologies come from a generated family unless a file is given.
  std::string family = "chain_walker";
  std::uint64_t family_seed = 0;
  std::vector<int> train_sizes{3, 4, 5};
  std::vector<int> test_sizes;
  bool include_missing = false;
  std::string train_file;
  std::string test_file;
  std::vector<std::uint64_t> seeds{0};
  TrainSchedule schedule;
  int baseline_episodes = 10;

  GcntConfig net;
  EnvConfig env;
  Td3Config td3;
  PpoConfig ppo;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

ExperimentConfig parse_experiment(const IniDocument& doc);
ExperimentConfig load_experiment(const std::filesystem::path& path);
/// Every key with its resolved value; parsing it back yields the same config.
std::string experiment_to_text(const ExperimentConfig& cfg);

std::vector<Morphology> train_morphologies(const ExperimentConfig& cfg);
std::vector<Morphology> test_morphologies(const ExperimentConfig& cfg);

/// Name-or-structure overlap between two sets, as a list of offending names.
std::vector<std::string> overlap(const std::vector<Morphology>& a, const std::vector<Morphology>& b);

/// Canonical text of a morphology's labelled structure (name excluded).
std::string structure_key(const Morphology& m);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> metrics;
  EvalReport final_report;
  Checkpoint checkpoint;
};

/// Trains one seed in memory.
SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Loads the actor stored in a checkpoint.
GcntNetwork load_actor(const Checkpoint& ck);

/// MORPHNET_OUT when set, else "runs".
std::filesystem::path output_root();

struct TrainOutcome {
  std::filesystem::path dir;
  std::vector<SeedRun> runs;
};

/// Trains every seed; writes config.toml, baselines.csv, metrics_seed<S>.csv,
/// checkpoint_seed<S>.gcnt and summary.csv into `dir`.
TrainOutcome train_experiment(const ExperimentConfig& cfg, const std::filesystem::path& dir);

/// Per-morphology table with mean, stderr and, when baselines are given,
/// the ratio to them.
std::string report_table(const EvalReport& report, const EvalReport* baseline = nullptr);

/// Reads a morphology set and rejects empty or invalid sets.
std::vector<Morphology> load_nonempty_set(const std::filesystem::path& path);

EvalReport eval_checkpoint(const Checkpoint& ck, const std::vector<Morphology>& ms, const EnvConfig& env,
                           int episodes, std::uint64_t seed);

/// Checks the morphologies against the checkpoint's training set (ContractError
/// on overlap) and evaluates.
EvalReport zero_shot(const Checkpoint& ck, const std::vector<Morphology>& ms, const EnvConfig& env, int episodes,
                     std::uint64_t seed);

/// Maps "gcn", "wl" or "dist" to a config with that module disabled.
ExperimentConfig ablated(const ExperimentConfig& cfg, const std::string& module);

struct AblationOutcome {
  TrainOutcome full;
  TrainOutcome ablated;
  std::filesystem::path comparison;
};

/// Writes `dir`/comparison_<module>.csv: final averages and actor parameter
/// counts of both variants, one row per seed.
std::filesystem::path write_comparison(const ExperimentConfig& cfg, const std::string& module,
                                       const TrainOutcome& full, const TrainOutcome& ablated_runs,
                                       const std::filesystem::path& dir);

/// Trains the full and the ablated model under `dir`/full and `dir`/no_<module>
/// and writes `dir`/comparison_<module>.csv.
AblationOutcome ablate_experiment(const ExperimentConfig& cfg, const std::string& module,
                                  const std::filesystem::path& dir);

/// Environment configuration recorded in a checkpoint's meta block.
EnvConfig checkpoint_env(const Checkpoint& ck);

}  // namespace morphnet
