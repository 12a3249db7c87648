// morphnet: train, evaluate and inspect shared morphology-agnostic policies.
//
//   morphnet train <config>
//   morphnet eval <ckpt> --morphs <file> --episodes N --seed S
//   morphnet zero-shot <ckpt> --morphs <file>
//   morphnet ablate <config> --module gcn|wl|dist
//   morphnet export-embeddings <ckpt> --morphs <file> --out <csv>
//   morphnet generate --family chain_walker --sizes 3,4,5 --out <json>
//   morphnet defaults
//
// Exit codes: 0 success, 2 usage or configuration error, 3 training diverged.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "morphnet/experiment.hpp"

namespace fs = std::filesystem;
using namespace morphnet;

namespace {

constexpr int kUsageError = 2;
constexpr int kDiverged = 3;

void write_report_csv(const EvalReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << metrics_csv(metrics_rows(0, report, {}));
}

// Baselines from a run's baselines.csv, keyed by morphology.
std::optional<EvalReport> read_baselines(const fs::path& path, const std::vector<Morphology>& ms) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read baselines " + path.string());
  std::map<std::string, double> means;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string name, split, mean;
    std::getline(ss, name, ',');
    std::getline(ss, split, ',');
    std::getline(ss, mean, ',');
    means[name] = parse_double(mean);
  }
  EvalReport report;
  for (const auto& m : ms) {
    auto it = means.find(m.name);
    if (it == means.end()) throw ConfigError("no recorded baseline for " + m.name + " in " + path.string());
    MorphologyReport r;
    r.morphology = m.name;
    r.mean_return = it->second;
    report.rows.push_back(r);
    report.average += it->second;
  }
  report.average /= static_cast<double>(ms.size());
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared GCN + transformer policies for modular chain robots"};
  app.require_subcommand(1);

  std::string config_path;
  std::string ckpt_path;
  std::string morphs_path;
  std::string out_path;
  std::string module;
  std::string baselines_path;
  int episodes = 10;
  std::uint64_t seed = 1000;

  auto* train = app.add_subcommand("train", "Train every seed of an experiment");
  train->add_option("config", config_path, "Experiment config")->required();
  train->add_option("--out", out_path, "Run directory (default: $MORPHNET_OUT or runs, then the experiment name)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint deterministically");
  eval->add_option("checkpoint", ckpt_path)->required();
  eval->add_option("--morphs", morphs_path, "Morphology set (JSON)")->required();
  eval->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed);
  eval->add_option("--out", out_path, "Report CSV");

  auto* zs = app.add_subcommand("zero-shot", "Evaluate on morphologies absent from training");
  zs->add_option("checkpoint", ckpt_path)->required();
  zs->add_option("--morphs", morphs_path, "Held-out morphology set (JSON)")->required();
  zs->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  zs->add_option("--seed", seed);
  zs->add_option("--baselines", baselines_path, "baselines.csv of the run (default: recomputed)");
  zs->add_option("--out", out_path, "Report CSV");

  auto* abl = app.add_subcommand("ablate", "Train with one module removed and compare with the full model");
  abl->add_option("config", config_path)->required();
  abl->add_option("--module", module, "gcn, wl or dist")->required();
  abl->add_option("--out", out_path, "Output directory");

  auto* emb = app.add_subcommand("export-embeddings", "Write per-node morphology features as CSV");
  emb->add_option("checkpoint", ckpt_path)->required();
  emb->add_option("--morphs", morphs_path)->required();
  emb->add_option("--out", out_path)->required();

  std::string family = "chain_walker";
  std::vector<int> sizes{3, 4, 5};
  bool missing = false;
  auto* gen = app.add_subcommand("generate", "Write a generated morphology family as JSON");
  gen->add_option("--family", family);
  gen->add_option("--sizes", sizes)->delimiter(',');
  gen->add_option("--seed", seed);
  gen->add_flag("--missing", missing, "Also emit the missing-limb variants");
  gen->add_option("--out", out_path)->required();

  auto* defaults = app.add_subcommand("defaults", "Print the full default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*train) {
      const ExperimentConfig cfg = load_experiment(config_path);
      const fs::path dir = out_path.empty() ? output_root() / cfg.name : fs::path(out_path);
      const TrainOutcome outcome = train_experiment(cfg, dir);
      for (const auto& run : outcome.runs) {
        std::cout << "seed " << run.seed << "\n" << report_table(run.final_report);
      }
      std::cout << "run directory: " << outcome.dir.string() << "\n";
    } else if (*eval || *zs) {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const std::vector<Morphology> ms = load_nonempty_set(morphs_path);
      const EnvConfig env = checkpoint_env(ck);
      EvalReport report;
      std::optional<EvalReport> baseline;
      if (*eval) {
        report = eval_checkpoint(ck, ms, env, episodes, seed);
      } else {
        report = zero_shot(ck, ms, env, episodes, seed);
        baseline = baselines_path.empty() ? evaluate_random(ms, env, episodes, kBaselineSeed)
                                          : *read_baselines(baselines_path, ms);
      }
      std::cout << report_table(report, baseline ? &*baseline : nullptr);
      if (!out_path.empty()) write_report_csv(report, out_path);
    } else if (*abl) {
      const ExperimentConfig cfg = load_experiment(config_path);
      ablated(cfg, module);
      const fs::path dir = out_path.empty() ? output_root() / (cfg.name + "_ablate_" + module) : fs::path(out_path);
      const AblationOutcome outcome = ablate_experiment(cfg, module, dir);
      std::ifstream in(outcome.comparison);
      std::cout << in.rdbuf();
    } else if (*emb) {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      const std::vector<Morphology> ms = load_nonempty_set(morphs_path);
      GcntNetwork actor = load_actor(ck);
      export_embeddings(ms, actor, out_path);
    } else if (*gen) {
      save_morphology_set(generate_family(family, sizes, seed, missing), out_path);
    } else if (*defaults) {
      std::cout << experiment_to_text(ExperimentConfig{});
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return 0;
}
