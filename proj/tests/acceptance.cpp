// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance 1 3 7      run a subset
//
// Learning runs write their run directories under $MORPHNET_OUT (default
// "runs")/acceptance.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "grad_cases.hpp"
#include "graph_oracles.hpp"
#include "morphnet/experiment.hpp"

using namespace morphnet;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Pinned tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr double kRowSumTol = 1e-12;
constexpr double kGcnTol = 1e-12;
constexpr double kEquivTol = 1e-9;
constexpr double kRunLimitSeconds = 15 * 60;

const fs::path kConfigs = MORPHNET_CONFIG_DIR;

fs::path run_dir(const std::string& name) { return output_root() / "acceptance" / name; }

// ---- numerical core -------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const GradCase& c : grad_cases()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double e = run_grad_case(c, seed);
      if (!(e <= worst)) {
        worst = e;
        worst_name = c.name;
      }
    }
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto role : {NetworkRole::kActor, NetworkRole::kCritic, NetworkRole::kValue}) {
      const double e = network_gradcheck(100 + seed, role);
      if (!(e <= worst)) {
        worst = e;
        worst_name = "network";
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTol && secs < 60.0,
          std::to_string(grad_cases().size()) + " ops + network x 20 seeds, worst rel err " + fmt("%.2e", worst) +
              " (" + worst_name + "), " + fmt("%.1f", secs) + " s"};
}

Outcome attention_normalization() {
  Rng rng(2);
  double worst = 0.0;
  bool bitwise = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.index(10);
    const std::size_t heads = 1 + rng.index(4);
    const std::size_t model = heads * (1 + rng.index(4));
    const std::size_t blocks = 1 + rng.index(3);
    ad::Tape t(false);
    auto q = t.constant(random_matrix(blocks * k, model, rng));
    auto kk = t.constant(random_matrix(blocks * k, model, rng));
    auto v = t.constant(random_matrix(blocks * k, model, rng));
    auto bias = t.constant(random_matrix(heads * k, k, rng, 2.0));
    for (bool with_bias : {false, true}) {
      ad::Matrix w;
      ad::attention(q, kk, v, with_bias ? std::optional<ad::Var>(bias) : std::nullopt, heads, k, &w);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += w(r, c);
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
    // A zero distance table must reproduce the unbiased path bit for bit.
    ad::ParameterSet set;
    const std::size_t table = set.add("table", ad::Matrix(5, heads));
    const std::vector<int> clamped = clamp_distances(floyd_distances(random_tree(static_cast<int>(k), rng)), 4);
    ParamBinding bind{t, set, false};
    const ad::Matrix with = ad::attention(q, kk, v, distance_bias(bind, table, clamped, k), heads, k).value();
    const ad::Matrix without = ad::attention(q, kk, v, std::nullopt, heads, k).value();
    bitwise = bitwise && with == without;
  }
  return {worst <= kRowSumTol && bitwise,
          "200 draws K<=10, max |row sum - 1| " + fmt("%.2e", worst) + ", zero table bit-equal: " +
              (bitwise ? "yes" : "no")};
}

// ---- graph / structure ----------------------------------------------------

Outcome floyd_vs_bfs() {
  const auto t0 = Clock::now();
  Rng rng(3);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(12));
    const Morphology m = random_connected_graph(k, rng, rng.uniform(0.0, 0.6));
    if (floyd_distances(m) == bfs_distances(m)) ++agree;
  }
  const double secs = seconds_since(t0);
  return {agree == 100 && secs < 5.0, std::to_string(agree) + "/100 graphs agree, " + fmt("%.3f", secs) + " s"};
}

Outcome wl_invariance() {
  const auto t0 = Clock::now();
  const WlConfig cfg{3, 32};
  Rng rng(4);
  int same = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Morphology m = random_tree(1 + static_cast<int>(rng.index(12)), rng);
    const Morphology pm = permute(m, random_permutation(static_cast<std::size_t>(m.num_nodes), rng));
    if (wl_histogram(m, cfg).counts == wl_histogram(pm, cfg).counts) ++same;
  }
  std::vector<std::multiset<std::string>> sets;
  for (int n = 1; n <= 8; ++n) {
    for (const auto& t : all_trees(n)) {
      std::multiset<std::string> colors;
      const WlColors c = wl_refine(t, cfg);
      for (std::size_t r = 0; r < c.size(); ++r)
        for (const auto& col : c[r]) colors.insert(std::to_string(r) + ":" + col);
      sets.push_back(std::move(colors));
    }
  }
  std::size_t pairs = 0, collisions = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      ++pairs;
      if (sets[i] == sets[j]) ++collisions;
    }
  }
  const double secs = seconds_since(t0);
  return {same == 200 && collisions == 0 && sets.size() == 48 && secs < 10.0,
          std::to_string(same) + "/200 permuted trees match, " + std::to_string(sets.size()) +
              " non-isomorphic trees K<=8, " + std::to_string(collisions) + "/" + std::to_string(pairs) +
              " colliding pairs, " + fmt("%.2f", secs) + " s"};
}

Outcome gcn_oracle() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(12));
    const Morphology m = random_connected_graph(k, rng, rng.uniform(0.0, 0.5));
    const std::size_t d = 1 + rng.index(8);
    const ad::Matrix h = random_matrix(static_cast<std::size_t>(k), d, rng);
    const ad::Matrix w1 = random_matrix(d, d, rng), w2 = random_matrix(d, d, rng);
    ad::Tape t(false);
    const ad::Matrix got =
        gcn_layer_forward(t.constant(h), t.constant(normalized_adjacency(adjacency(m))), t.constant(w1), t.constant(w2))
            .value();
    worst = std::max(worst, ad::max_abs_diff(got, gcn_layer_oracle(m, h, w1, w2)));
  }
  return {worst <= kGcnTol, "50 draws, max abs diff " + fmt("%.2e", worst)};
}

ad::Matrix permute_blocks(const ad::Matrix& m, const std::vector<int>& p, std::size_t batch) {
  const std::size_t k = p.size();
  ad::Matrix out(m.rows(), m.cols());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t c = 0; c < m.cols(); ++c) out(b * k + static_cast<std::size_t>(p[i]), c) = m(b * k + i, c);
  return out;
}

Outcome permutation_equivariance() {
  Rng rng(6);
  GcntConfig cfg = small_net_config();
  cfg.model = 16;
  cfg.transformer_layers = 2;
  cfg.max_distance = 4;
  double worst_actor = 0.0, worst_critic = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    GcntNetwork actor(cfg, NetworkRole::kActor, rng.next());
    GcntNetwork critic(cfg, NetworkRole::kCritic, rng.next());
    for (GcntNetwork* net : {&actor, &critic})
      for (auto& p : net->params())
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += 0.3 * rng.normal();
    const int k = 2 + static_cast<int>(rng.index(9));
    const Morphology m = random_tree(k, rng);
    const auto p = random_permutation(static_cast<std::size_t>(k), rng);
    const MorphologyEncoding e = encode(m, cfg), pe = encode(permute(m, p), cfg);
    const std::size_t batch = 1 + rng.index(3);
    const ad::Matrix obs = random_matrix(batch * e.k, 11, rng), act = random_matrix(batch * e.k, 1, rng);
    const ad::Matrix pobs = permute_blocks(obs, p, batch), pact = permute_blocks(act, p, batch);

    ad::Tape t(false);
    auto ba = actor.bind(t, false);
    const ad::Matrix y = actor.head(ba, actor.forward(ba, e, t.constant(obs), batch)).value();
    const ad::Matrix py = actor.head(ba, actor.forward(ba, pe, t.constant(pobs), batch)).value();
    worst_actor = std::max(worst_actor, ad::max_abs_diff(permute_blocks(y, p, batch), py));
    auto bc = critic.bind(t, false);
    const ad::Matrix q = critic_value(bc, critic, e, obs, t.constant(act), batch).value();
    const ad::Matrix pq = critic_value(bc, critic, pe, pobs, t.constant(pact), batch).value();
    worst_critic = std::max(worst_critic, ad::max_abs_diff(q, pq));
  }
  return {worst_actor <= kEquivTol && worst_critic <= kEquivTol,
          "50 draws, actor max diff " + fmt("%.2e", worst_actor) + ", critic max diff " + fmt("%.2e", worst_critic)};
}

// ---- learning -------------------------------------------------------------

struct TrainedSet {
  ExperimentConfig cfg;
  TrainOutcome outcome;
  double random_average = 0.0;
  std::vector<double> seconds;
};

TrainedSet train_timed(const ExperimentConfig& cfg, const fs::path& dir) {
  TrainedSet out;
  out.cfg = cfg;
  out.outcome.dir = dir;
  // One seed at a time so each run is timed on its own.
  for (std::uint64_t seed : cfg.seeds) {
    ExperimentConfig one = cfg;
    one.seeds = {seed};
    const auto t0 = Clock::now();
    TrainOutcome o = train_experiment(one, dir / ("seed" + std::to_string(seed)));
    out.seconds.push_back(seconds_since(t0));
    out.outcome.runs.push_back(std::move(o.runs.front()));
  }
  out.random_average =
      evaluate_random(train_morphologies(cfg), cfg.env, cfg.baseline_episodes, kBaselineSeed).average;
  return out;
}

double max_of(const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

std::string per_seed(const TrainedSet& s) {
  std::string d;
  for (std::size_t i = 0; i < s.outcome.runs.size(); ++i) {
    const auto& r = s.outcome.runs[i];
    d += (i ? ", " : "") + std::string("seed ") + std::to_string(r.seed) + " " + fmt("%.2f", r.final_report.average) +
         " (" + fmt("%.1fx", r.final_report.average / s.random_average) + ", " + fmt("%.0f s", s.seconds[i]) + ")";
  }
  return d;
}

std::map<std::string, TrainedSet> cache;

const TrainedSet& td3_walker() {
  auto it = cache.find("td3");
  if (it == cache.end()) {
    it = cache.emplace("td3", train_timed(load_experiment(kConfigs / "td3_walker.toml"), run_dir("td3_walker"))).first;
  }
  return it->second;
}

Outcome multi_td3() {
  const TrainedSet& s = td3_walker();
  bool ok = s.outcome.runs.size() == 3 && s.cfg.schedule.total_steps == 50000 && max_of(s.seconds) <= kRunLimitSeconds;
  for (const auto& r : s.outcome.runs) ok = ok && r.final_report.average >= 3.0 * s.random_average;
  return {ok, "random " + fmt("%.2f", s.random_average) + "; " + per_seed(s)};
}

Outcome multi_ppo() {
  const ExperimentConfig cfg = load_experiment(kConfigs / "ppo_walker.toml");
  const TrainedSet s = train_timed(cfg, run_dir("ppo_walker"));
  bool ok = s.outcome.runs.size() == 3 && cfg.schedule.total_steps == 200000 && cfg.ppo.early_stop_kl == 0.05 &&
            max_of(s.seconds) <= kRunLimitSeconds;
  std::string stops;
  for (const auto& r : s.outcome.runs) {
    ok = ok && r.final_report.average >= 3.0 * s.random_average;
    double early = 0.0;
    for (const auto& [name, v] : r.metrics.back().diagnostics)
      if (name == "early_stops") early = v;
    ok = ok && early >= 1.0;
    stops += (stops.empty() ? "" : "/") + std::to_string(static_cast<long long>(early));
  }
  return {ok, "random " + fmt("%.2f", s.random_average) + "; " + per_seed(s) + "; early stops " + stops};
}

Outcome zero_shot_criterion() {
  const ExperimentConfig cfg = load_experiment(kConfigs / "td3_zero_shot.toml");
  const TrainedSet s = train_timed(cfg, run_dir("td3_zero_shot"));
  const std::vector<Morphology> test = test_morphologies(cfg);
  const double base = evaluate_random(test, cfg.env, cfg.baseline_episodes, kBaselineSeed).average;
  int good = 0;
  std::string d;
  for (const auto& r : s.outcome.runs) {
    const EvalReport rep = zero_shot(r.checkpoint, test, cfg.env, cfg.schedule.eval_episodes, cfg.schedule.eval_seed);
    if (rep.average >= 2.0 * base) ++good;
    d += (d.empty() ? "" : ", ") + std::string("seed ") + std::to_string(r.seed) + " " + fmt("%.2f", rep.average) +
         " (" + fmt("%.1fx", rep.average / base) + ")";
  }
  const bool held_out = test.size() == 1 && test[0].num_nodes == 6 && overlap(train_morphologies(cfg), test).empty();
  return {held_out && good >= 2 && max_of(s.seconds) <= kRunLimitSeconds,
          "size-6 random " + fmt("%.2f", base) + "; " + d + "; " + std::to_string(good) + "/3 seeds >= 2x"};
}

Outcome ablations() {
  const TrainedSet& full = td3_walker();
  std::map<std::string, TrainedSet> ab;
  bool ok = true;
  for (const char* module : {"gcn", "wl", "dist"}) {
    const ExperimentConfig cfg = ablated(full.cfg, module);
    TrainedSet s = train_timed(cfg, run_dir("ablation") / ("no_" + std::string(module)));
    const fs::path csv = write_comparison(full.cfg, module, full.outcome, s.outcome, run_dir("ablation"));
    ok = ok && fs::exists(csv) && max_of(s.seconds) <= kRunLimitSeconds;
    ok = ok && GcntNetwork(cfg.net, NetworkRole::kActor, 0).params().scalar_count() <
                   GcntNetwork(full.cfg.net, NetworkRole::kActor, 0).params().scalar_count();
    for (const auto& r : s.outcome.runs) ok = ok && std::isfinite(r.final_report.average);
    ab.emplace(module, std::move(s));
  }
  int wins = 0;
  std::string d;
  for (std::size_t i = 0; i < full.outcome.runs.size(); ++i) {
    double worst = 1e300;
    for (const auto& [m, s] : ab) worst = std::min(worst, s.outcome.runs[i].final_report.average);
    const double f = full.outcome.runs[i].final_report.average;
    if (f >= worst) ++wins;
    d += (d.empty() ? "" : "; ") + std::string("seed ") + std::to_string(full.outcome.runs[i].seed) + " full " +
         fmt("%.2f", f) + " gcn " + fmt("%.2f", ab.at("gcn").outcome.runs[i].final_report.average) + " wl " +
         fmt("%.2f", ab.at("wl").outcome.runs[i].final_report.average) + " dist " +
         fmt("%.2f", ab.at("dist").outcome.runs[i].final_report.average);
  }
  return {ok && wins >= 2, d + "; full >= worst ablation on " + std::to_string(wins) + "/3 seeds"};
}

Outcome determinism() {
  bool ok = true;
  std::string d;
  for (const char* name : {"td3_walker.toml", "ppo_walker.toml"}) {
    ExperimentConfig cfg = load_experiment(kConfigs / name);
    cfg.schedule.total_steps = cfg.trainer == "td3" ? 6000 : 8000;
    cfg.schedule.eval_interval = cfg.schedule.total_steps / 2;
    cfg.td3.initial_explore_steps = 2000;
    const std::string a = metrics_csv(run_seed(cfg, 1).metrics);
    const std::string b = metrics_csv(run_seed(cfg, 1).metrics);
    ok = ok && a == b;
    d += (d.empty() ? "" : ", ") + cfg.trainer + (a == b ? " identical" : " DIFFERENT") + " (" +
         std::to_string(a.size()) + " bytes)";
  }
  // The full-length TD3 runs written to disk twice must match as well.
  const TrainedSet& full = td3_walker();
  ExperimentConfig one = full.cfg;
  one.seeds = {0};
  const TrainOutcome again = train_experiment(one, run_dir("td3_walker_repeat"));
  const std::string first = metrics_csv(full.outcome.runs.front().metrics);
  const bool same = metrics_csv(again.runs.front().metrics) == first;
  ok = ok && same;
  d += std::string(", full td3 seed 0 rerun ") + (same ? "identical" : "DIFFERENT");
  return {ok, d};
}

Outcome checkpoint_round_trip() {
  const TrainedSet& s = td3_walker();
  const SeedRun& run = s.outcome.runs.front();
  const fs::path path = run_dir("td3_walker") / "seed0" / "checkpoint_seed0.gcnt";
  const Checkpoint loaded = load_checkpoint(path);
  const std::vector<Morphology> ms = train_morphologies(s.cfg);
  const EvalReport in_memory = eval_checkpoint(run.checkpoint, ms, s.cfg.env, 7, 4242);
  const EvalReport from_disk = eval_checkpoint(loaded, ms, checkpoint_env(loaded), 7, 4242);
  bool same = in_memory.average == from_disk.average;
  for (std::size_t i = 0; i < ms.size(); ++i) same = same && in_memory.rows[i].returns == from_disk.rows[i].returns;
  // The recorded training-end evaluation is reproduced from the file as well.
  const EvalReport replay = eval_checkpoint(loaded, ms, checkpoint_env(loaded), s.cfg.schedule.eval_episodes,
                                            s.cfg.schedule.eval_seed);
  const bool matches_training = replay.average == run.final_report.average;
  return {same && matches_training, std::string("returns ") + (same ? "identical" : "DIFFERENT") +
                                        " after save/load; training-end average " +
                                        fmt("%.6f", run.final_report.average) + " vs replay " +
                                        fmt("%.6f", replay.average)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"attention normalization", attention_normalization},
      {"Floyd vs BFS", floyd_vs_bfs},
      {"WL invariance and separation", wl_invariance},
      {"GCN per-node oracle", gcn_oracle},
      {"permutation equivariance", permutation_equivariance},
      {"multi-morphology TD3", multi_td3},
      {"multi-morphology PPO", multi_ppo},
      {"zero-shot size 6", zero_shot_criterion},
      {"ablations", ablations},
      {"determinism", determinism},
      {"checkpoint round trip", checkpoint_round_trip},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
