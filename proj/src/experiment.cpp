#include "morphnet/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace morphnet {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (trainer != "td3" && trainer != "ppo") throw ConfigError("experiment.trainer must be td3 or ppo, got " + trainer);
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("experiment.name must be a plain name");
  if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (schedule.total_steps < 1) throw ConfigError("experiment.total_steps must be >= 1");
  if (schedule.eval_episodes < 1 || baseline_episodes < 1) {
    throw ConfigError("experiment.eval_episodes and baseline_episodes must be >= 1");
  }
  if (train_file.empty() && train_sizes.empty()) throw ConfigError("experiment: no training morphologies");
  try {
    net.validate();
    env.validate();
    td3.validate();
    ppo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (net.num_types != kNumLimbTypes) throw ConfigError("net.num_types must equal the limb vocabulary size 5");
  if (net.obs_dim != observation_dim()) {
    throw ConfigError("net.obs_dim must equal the observation width " + std::to_string(observation_dim()));
  }
}

namespace {

std::string double_list(const std::array<double, kNumLimbTypes>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + "]";
}

std::array<double, kNumLimbTypes> parse_type_array(const std::string& v) {
  const auto items = parse_list(v);
  if (items.size() != kNumLimbTypes) throw ConfigError("expected one value per limb type (5): " + v);
  std::array<double, kNumLimbTypes> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = parse_double(items[i]);
  return out;
}

using Entries = std::vector<std::pair<std::string, std::string>>;

Entries env_entries(const EnvConfig& e) {
  return {
      {"dt", format_double(e.dt)},
      {"episode_len", std::to_string(e.episode_len)},
      {"ctrl_cost", format_double(e.ctrl_cost)},
      {"damping", format_double(e.damping)},
      {"gear", double_list(e.gear)},
      {"joint_range", format_double(e.joint_range)},
      {"omega_max", format_double(e.omega_max)},
      {"propulsion", double_list(e.propulsion)},
  };
}

void set_env_key(EnvConfig& e, const std::string& key, const std::string& v) {
  if (key == "dt") e.dt = parse_double(v);
  else if (key == "episode_len") e.episode_len = parse_int(v);
  else if (key == "ctrl_cost") e.ctrl_cost = parse_double(v);
  else if (key == "damping") e.damping = parse_double(v);
  else if (key == "gear") e.gear = parse_type_array(v);
  else if (key == "joint_range") e.joint_range = parse_double(v);
  else if (key == "omega_max") e.omega_max = parse_double(v);
  else if (key == "propulsion") e.propulsion = parse_type_array(v);
  else throw ConfigError("unknown key env." + key);
}

Entries td3_entries(const Td3Config& c) {
  return {
      {"batch", std::to_string(c.batch)},
      {"policy_noise", format_double(c.policy_noise)},
      {"noise_clip", format_double(c.noise_clip)},
      {"tau", format_double(c.tau)},
      {"explore_sigma", format_double(c.explore_sigma)},
      {"gamma", format_double(c.gamma)},
      {"policy_update_interval", std::to_string(c.policy_update_interval)},
      {"initial_explore_steps", std::to_string(c.initial_explore_steps)},
      {"lr", format_double(c.lr)},
      {"grad_clip", format_double(c.grad_clip)},
      {"buffer_capacity", std::to_string(c.buffer_capacity)},
      {"updates_per_episode", std::to_string(c.updates_per_episode)},
  };
}

void set_td3_key(Td3Config& c, const std::string& key, const std::string& v) {
  if (key == "batch") c.batch = parse_int(v);
  else if (key == "policy_noise") c.policy_noise = parse_double(v);
  else if (key == "noise_clip") c.noise_clip = parse_double(v);
  else if (key == "tau") c.tau = parse_double(v);
  else if (key == "explore_sigma") c.explore_sigma = parse_double(v);
  else if (key == "gamma") c.gamma = parse_double(v);
  else if (key == "policy_update_interval") c.policy_update_interval = parse_int(v);
  else if (key == "initial_explore_steps") c.initial_explore_steps = static_cast<std::int64_t>(parse_u64(v));
  else if (key == "lr") c.lr = parse_double(v);
  else if (key == "grad_clip") c.grad_clip = parse_double(v);
  else if (key == "buffer_capacity") c.buffer_capacity = parse_u64(v);
  else if (key == "updates_per_episode") c.updates_per_episode = parse_int(v);
  else throw ConfigError("unknown key td3." + key);
}

Entries ppo_entries(const PpoConfig& c) {
  return {
      {"gamma", format_double(c.gamma)},
      {"lambda", format_double(c.lambda)},
      {"epochs", std::to_string(c.epochs)},
      {"batch", std::to_string(c.batch)},
      {"batch_divisor", format_double(c.batch_divisor)},
      {"minibatches", std::to_string(c.minibatches)},
      {"clip", format_double(c.clip)},
      {"value_coef", format_double(c.value_coef)},
      {"early_stop_kl", format_double(c.early_stop_kl)},
      {"warmup_iterations", std::to_string(c.warmup_iterations)},
      {"lr", format_double(c.lr)},
      {"grad_clip", format_double(c.grad_clip)},
      {"sampling_floor", format_double(c.sampling_floor)},
  };
}

void set_ppo_key(PpoConfig& c, const std::string& key, const std::string& v) {
  if (key == "gamma") c.gamma = parse_double(v);
  else if (key == "lambda") c.lambda = parse_double(v);
  else if (key == "epochs") c.epochs = parse_int(v);
  else if (key == "batch") c.batch = parse_int(v);
  else if (key == "batch_divisor") c.batch_divisor = parse_double(v);
  else if (key == "minibatches") c.minibatches = parse_int(v);
  else if (key == "clip") c.clip = parse_double(v);
  else if (key == "value_coef") c.value_coef = parse_double(v);
  else if (key == "early_stop_kl") c.early_stop_kl = parse_double(v);
  else if (key == "warmup_iterations") c.warmup_iterations = parse_int(v);
  else if (key == "lr") c.lr = parse_double(v);
  else if (key == "grad_clip") c.grad_clip = parse_double(v);
  else if (key == "sampling_floor") c.sampling_floor = parse_double(v);
  else throw ConfigError("unknown key ppo." + key);
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string s = "[";
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? ", " : "") + std::to_string(seeds[i]);
  return s + "]";
}

Entries experiment_entries(const ExperimentConfig& c) {
  return {
      {"name", format_string(c.name)},
      {"trainer", format_string(c.trainer)},
      {"family", format_string(c.family)},
      {"family_seed", std::to_string(c.family_seed)},
      {"train_sizes", format_int_list(c.train_sizes)},
      {"test_sizes", format_int_list(c.test_sizes)},
      {"include_missing", format_bool(c.include_missing)},
      {"train_file", format_string(c.train_file)},
      {"test_file", format_string(c.test_file)},
      {"seeds", seed_list(c.seeds)},
      {"total_steps", std::to_string(c.schedule.total_steps)},
      {"eval_interval", std::to_string(c.schedule.eval_interval)},
      {"eval_episodes", std::to_string(c.schedule.eval_episodes)},
      {"eval_seed", std::to_string(c.schedule.eval_seed)},
      {"baseline_episodes", std::to_string(c.baseline_episodes)},
  };
}

void set_experiment_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  if (key == "name") c.name = parse_string(v);
  else if (key == "trainer") c.trainer = parse_string(v);
  else if (key == "family") c.family = parse_string(v);
  else if (key == "family_seed") c.family_seed = parse_u64(v);
  else if (key == "train_sizes") c.train_sizes = parse_int_list(v);
  else if (key == "test_sizes") c.test_sizes = parse_int_list(v);
  else if (key == "include_missing") c.include_missing = parse_bool(v);
  else if (key == "train_file") c.train_file = parse_string(v);
  else if (key == "test_file") c.test_file = parse_string(v);
  else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : parse_list(v)) c.seeds.push_back(parse_u64(s));
  } else if (key == "total_steps") c.schedule.total_steps = static_cast<std::int64_t>(parse_u64(v));
  else if (key == "eval_interval") c.schedule.eval_interval = static_cast<std::int64_t>(parse_u64(v));
  else if (key == "eval_episodes") c.schedule.eval_episodes = parse_int(v);
  else if (key == "eval_seed") c.schedule.eval_seed = parse_u64(v);
  else if (key == "baseline_episodes") c.baseline_episodes = parse_int(v);
  else throw ConfigError("unknown key experiment." + key);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_names(const std::vector<Morphology>& ms) {
  std::vector<std::string> names;
  for (const auto& m : ms) names.push_back(m.name);
  return format_string_list(names);
}

std::string join_structures(const std::vector<Morphology>& ms) {
  std::vector<std::string> keys;
  for (const auto& m : ms) keys.push_back(structure_key(m));
  return format_string_list(keys);
}

}  // namespace

ExperimentConfig parse_experiment(const IniDocument& doc) {
  ExperimentConfig cfg;
  for (const auto& section : doc.sections) {
    for (const auto& e : section.entries) {
      try {
        if (section.name == "experiment") set_experiment_key(cfg, e.key, e.value);
        else if (section.name == "net") set_net_key(cfg.net, e.key, e.value);
        else if (section.name == "env") set_env_key(cfg.env, e.key, e.value);
        else if (section.name == "td3") set_td3_key(cfg.td3, e.key, e.value);
        else if (section.name == "ppo") set_ppo_key(cfg.ppo, e.key, e.value);
        else throw ConfigError("unknown section [" + section.name + "]");
      } catch (const ConfigError& err) {
        throw ConfigError(doc.origin + ":" + std::to_string(e.line) + ": " + err.what());
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path) { return parse_experiment(load_ini(path.string())); }

std::string experiment_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  auto section = [&out](const std::string& name, const Entries& entries) {
    out << "[" << name << "]\n";
    for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
  };
  section("experiment", experiment_entries(cfg));
  out << "\n";
  section("net", net_entries(cfg.net));
  out << "\n";
  section("env", env_entries(cfg.env));
  out << "\n";
  section("td3", td3_entries(cfg.td3));
  out << "\n";
  section("ppo", ppo_entries(cfg.ppo));
  return out.str();
}

std::vector<Morphology> train_morphologies(const ExperimentConfig& cfg) {
  if (!cfg.train_file.empty()) return load_nonempty_set(cfg.train_file);
  return generate_family(cfg.family, cfg.train_sizes, cfg.family_seed, cfg.include_missing);
}

std::vector<Morphology> test_morphologies(const ExperimentConfig& cfg) {
  if (!cfg.test_file.empty()) return load_nonempty_set(cfg.test_file);
  if (cfg.test_sizes.empty()) return {};
  return generate_family(cfg.family, cfg.test_sizes, cfg.family_seed, cfg.include_missing);
}

std::string structure_key(const Morphology& m) {
  std::string s = "r" + std::to_string(m.root) + "|t";
  for (std::size_t i = 0; i < m.limb_types.size(); ++i) s += (i ? "." : "") + std::to_string(m.limb_types[i]);
  s += "|e";
  for (std::size_t i = 0; i < m.edges.size(); ++i) {
    s += (i ? ";" : "") + std::to_string(m.edges[i].first) + ":" + std::to_string(m.edges[i].second);
  }
  return s;
}

std::vector<std::string> overlap(const std::vector<Morphology>& a, const std::vector<Morphology>& b) {
  std::set<std::string> names;
  std::set<std::string> keys;
  for (const auto& m : a) {
    names.insert(m.name);
    keys.insert(structure_key(m));
  }
  std::vector<std::string> out;
  for (const auto& m : b) {
    if (names.count(m.name) || keys.count(structure_key(m))) out.push_back(m.name);
  }
  return out;
}

std::vector<Morphology> load_nonempty_set(const fs::path& path) {
  std::vector<Morphology> ms = load_morphology_set(path);
  if (ms.empty()) throw ConfigError("morphology set " + path.string() + " is empty");
  std::set<std::string> names;
  for (const auto& m : ms) {
    validate(m);
    if (!names.insert(m.name).second) throw ConfigError("duplicate morphology name " + m.name + " in " + path.string());
  }
  return ms;
}

SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::vector<Morphology> train = train_morphologies(cfg);
  SeedRun run;
  run.seed = seed;
  run.checkpoint.net = cfg.net;
  run.checkpoint.meta["trainer"] = format_string(cfg.trainer);
  run.checkpoint.meta["seed"] = std::to_string(seed);
  run.checkpoint.meta["train_morphologies"] = join_names(train);
  run.checkpoint.meta["train_structures"] = join_structures(train);
  run.checkpoint.meta["eval_seed"] = std::to_string(cfg.schedule.eval_seed);
  for (const auto& [k, v] : env_entries(cfg.env)) run.checkpoint.meta["env." + k] = v;

  if (cfg.trainer == "td3") {
    Td3Trainer trainer(train, cfg.env, cfg.td3, cfg.net, seed);
    run.metrics = trainer.train(cfg.schedule);
    append_network(run.checkpoint, "actor", trainer.actor());
    append_network(run.checkpoint, "q1", trainer.q1());
    append_network(run.checkpoint, "q2", trainer.q2());
  } else {
    PpoTrainer trainer(train, cfg.env, cfg.ppo, cfg.net, seed);
    run.metrics = trainer.train(cfg.schedule);
    append_network(run.checkpoint, "actor", trainer.actor());
    append_network(run.checkpoint, "value", trainer.value());
  }
  // The last logged evaluation is the final one.
  for (const auto& r : run.metrics) {
    if (r.step != run.metrics.back().step) continue;
    if (r.morphology == "average") {
      run.final_report.average = r.mean_return;
      continue;
    }
    MorphologyReport m;
    m.morphology = r.morphology;
    m.episodes = cfg.schedule.eval_episodes;
    m.mean_return = r.mean_return;
    m.stderr_return = r.stderr_return;
    m.mean_length = r.episode_len;
    run.final_report.rows.push_back(m);
  }
  return run;
}

GcntNetwork load_actor(const Checkpoint& ck) {
  if (ck.net.obs_dim != observation_dim()) {
    throw ContractError("checkpoint obs_dim " + std::to_string(ck.net.obs_dim) + " does not match environment width " +
                        std::to_string(observation_dim()));
  }
  if (ck.net.num_types != kNumLimbTypes) {
    throw ContractError("checkpoint limb vocabulary " + std::to_string(ck.net.num_types) + " does not match " +
                        std::to_string(kNumLimbTypes));
  }
  GcntNetwork actor(ck.net, NetworkRole::kActor, 0, ck.find("actor.log_std") != nullptr);
  restore_network(ck, "actor", actor);
  return actor;
}

EnvConfig checkpoint_env(const Checkpoint& ck) {
  EnvConfig env;
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("env.", 0) == 0) set_env_key(env, k.substr(4), v);
  }
  env.validate();
  return env;
}

fs::path output_root() {
  const char* v = std::getenv("MORPHNET_OUT");
  return (v != nullptr && *v != '\0') ? fs::path(v) : fs::path("runs");
}

TrainOutcome train_experiment(const ExperimentConfig& cfg, const fs::path& dir) {
  cfg.validate();
  const std::vector<Morphology> train = train_morphologies(cfg);
  const std::vector<Morphology> test = test_morphologies(cfg);
  if (const auto bad = overlap(train, test); !bad.empty()) {
    throw ConfigError("train and test morphologies overlap: " + bad.front());
  }
  fs::create_directories(dir);
  write_file(dir / "config.toml", experiment_to_text(cfg));

  std::string baselines = "morphology,split,mean_return,stderr\n";
  const EvalReport train_base = evaluate_random(train, cfg.env, cfg.baseline_episodes, kBaselineSeed);
  for (const auto& r : train_base.rows) {
    baselines += r.morphology + ",train," + num(r.mean_return) + "," + num(r.stderr_return) + "\n";
  }
  if (!test.empty()) {
    const EvalReport test_base = evaluate_random(test, cfg.env, cfg.baseline_episodes, kBaselineSeed);
    for (const auto& r : test_base.rows) {
      baselines += r.morphology + ",test," + num(r.mean_return) + "," + num(r.stderr_return) + "\n";
    }
  }
  write_file(dir / "baselines.csv", baselines);

  TrainOutcome outcome;
  outcome.dir = dir;
  std::string summary = "seed,final_average,random_average,ratio\n";
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun run = run_seed(cfg, seed);
    const std::string tag = "seed" + std::to_string(seed);
    write_file(dir / ("metrics_" + tag + ".csv"), metrics_csv(run.metrics));
    save_checkpoint(run.checkpoint, dir / ("checkpoint_" + tag + ".gcnt"));
    summary += std::to_string(seed) + "," + num(run.final_report.average) + "," + num(train_base.average) + "," +
               num(run.final_report.average / train_base.average) + "\n";
    outcome.runs.push_back(std::move(run));
  }
  write_file(dir / "summary.csv", summary);
  return outcome;
}

std::string report_table(const EvalReport& report, const EvalReport* baseline) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %12s %10s", "morphology", "mean_return", "stderr");
  out << buf << (baseline ? "      ratio" : "") << "\n";
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %12.4f %10.4f", r.morphology.c_str(), r.mean_return, r.stderr_return);
    out << buf;
    if (baseline) {
      const MorphologyReport* b = baseline->find(r.morphology);
      std::snprintf(buf, sizeof(buf), " %10.4f", b ? r.mean_return / b->mean_return : 0.0);
      out << buf;
    }
    out << "\n";
  }
  std::snprintf(buf, sizeof(buf), "%-28s %12.4f", "average", report.average);
  out << buf;
  if (baseline) {
    std::snprintf(buf, sizeof(buf), " %10s %10.4f", "", report.average / baseline->average);
    out << buf;
  }
  out << "\n";
  return out.str();
}

EvalReport eval_checkpoint(const Checkpoint& ck, const std::vector<Morphology>& ms, const EnvConfig& env,
                           int episodes, std::uint64_t seed) {
  if (ms.empty()) throw ContractError("no morphologies to evaluate");
  GcntNetwork actor = load_actor(ck);
  return evaluate(actor, ms, env, episodes, seed);
}

EvalReport zero_shot(const Checkpoint& ck, const std::vector<Morphology>& ms, const EnvConfig& env, int episodes,
                     std::uint64_t seed) {
  std::set<std::string> names;
  std::set<std::string> keys;
  if (auto it = ck.meta.find("train_morphologies"); it != ck.meta.end()) {
    for (const auto& n : parse_list(it->second)) names.insert(n);
  }
  if (auto it = ck.meta.find("train_structures"); it != ck.meta.end()) {
    for (const auto& k : parse_list(it->second)) keys.insert(k);
  }
  for (const auto& m : ms) {
    if (names.count(m.name) || keys.count(structure_key(m))) {
      throw ContractError("morphology " + m.name + " was part of the training set");
    }
  }
  return eval_checkpoint(ck, ms, env, episodes, seed);
}

ExperimentConfig ablated(const ExperimentConfig& cfg, const std::string& module) {
  ExperimentConfig out = cfg;
  if (module == "gcn") out.net.use_gcn = false;
  else if (module == "wl") out.net.use_wl = false;
  else if (module == "dist") out.net.use_distance = false;
  else throw ConfigError("unknown ablation module " + module + " (expected gcn, wl or dist)");
  out.name = cfg.name + "_no_" + module;
  return out;
}

fs::path write_comparison(const ExperimentConfig& cfg, const std::string& module, const TrainOutcome& full,
                          const TrainOutcome& ablated_runs, const fs::path& dir) {
  const ExperimentConfig variant = ablated(cfg, module);
  const std::size_t full_params = GcntNetwork(cfg.net, NetworkRole::kActor, 0).params().scalar_count();
  const std::size_t ablated_params = GcntNetwork(variant.net, NetworkRole::kActor, 0).params().scalar_count();
  std::string csv = "variant,seed,final_average,actor_parameters\n";
  for (const auto& r : full.runs) {
    csv += "full," + std::to_string(r.seed) + "," + num(r.final_report.average) + "," + std::to_string(full_params) + "\n";
  }
  for (const auto& r : ablated_runs.runs) {
    csv += "no_" + module + "," + std::to_string(r.seed) + "," + num(r.final_report.average) + "," +
           std::to_string(ablated_params) + "\n";
  }
  const fs::path path = dir / ("comparison_" + module + ".csv");
  fs::create_directories(dir);
  write_file(path, csv);
  return path;
}

AblationOutcome ablate_experiment(const ExperimentConfig& cfg, const std::string& module, const fs::path& dir) {
  const ExperimentConfig variant = ablated(cfg, module);
  AblationOutcome out;
  out.full = train_experiment(cfg, dir / "full");
  out.ablated = train_experiment(variant, dir / ("no_" + module));
  out.comparison = write_comparison(cfg, module, out.full, out.ablated, dir);
  return out;
}

}  // namespace morphnet
