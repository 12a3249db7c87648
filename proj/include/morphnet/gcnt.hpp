#pragma once

// The full policy/critic network: per-limb observation encoder, morphology
// features (GCN output concatenated with the WL histogram, projected to the
// model width and added to the encoded observations), distance-biased
// transformer, a residual from the encoder output, and a per-limb linear head.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "morphnet/binding.hpp"
#include "morphnet/gcn.hpp"
#include "morphnet/morphology.hpp"
#include "morphnet/transformer.hpp"
#include "morphnet/wl.hpp"

namespace morphnet {

struct GcntConfig {
  int obs_dim = 11;
  int num_types = kNumLimbTypes;
  int model = 128;
  GcnConfig gcn;
  WlConfig wl;
  int transformer_layers = 3;
  int heads = 2;
  int feedforward = 256;
  int max_distance = 16;
  int action_dim = 1;
  bool use_gcn = true;
  bool use_wl = true;
  bool use_distance = true;

  TransformerConfig transformer() const;
  void validate() const;
  bool operator==(const GcntConfig&) const;
};

/// Everything about a morphology the network needs that does not depend on
/// parameters.
struct MorphologyEncoding {
  Morphology morphology;
  std::size_t k = 0;
  ad::Matrix one_hot;        // K × T
  ad::Matrix a_hat;          // K × K
  IntMatrix distances;       // K × K hops
  std::vector<int> clamped;  // K·K table rows
  ad::Matrix histogram;      // 1 × bins, sums to 1
  ad::Matrix action_mask;    // K × action_dim, zero on the root
};

MorphologyEncoding encode(const Morphology& m, const GcntConfig& cfg);

/// Encodings keyed by morphology name.
class EncodingCache {
 public:
  explicit EncodingCache(GcntConfig cfg) : cfg_(std::move(cfg)) {}
  const MorphologyEncoding& get(const Morphology& m);

 private:
  GcntConfig cfg_;
  std::map<std::string, MorphologyEncoding> cache_;
};

/// Actors emit action_dim per limb; Q-critics read observation ⊕ action and
/// emit one scalar per limb; value critics read the observation only.
enum class NetworkRole { kActor, kCritic, kValue };

class GcntNetwork {
 public:
  GcntNetwork(GcntConfig cfg, NetworkRole role, std::uint64_t seed, bool with_log_std = false);

  const GcntConfig& config() const { return cfg_; }
  NetworkRole role() const { return role_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  bool has_log_std() const { return log_std_.has_value(); }

  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  /// K × model morphology features (zeros when both GCN and WL are ablated).
  ad::Var morph_features(const ParamBinding& bind, const MorphologyEncoding& enc) const;

  /// (B·K) × model trunk output for `batch` stacked samples of one morphology.
  ad::Var forward(const ParamBinding& bind, const MorphologyEncoding& enc, ad::Var input, std::size_t batch) const;

  /// Linear head over the trunk output.
  ad::Var head(const ParamBinding& bind, ad::Var trunk) const;

  ad::Var log_std(const ParamBinding& bind) const;

  ParamBinding bind(ad::Tape& tape, bool trainable = true) { return ParamBinding{tape, params_, trainable}; }

  /// Copies parameter values from another network of identical structure.
  void copy_from(const GcntNetwork& other);
  /// target ← tau·this + (1 − tau)·target.
  void polyak_into(GcntNetwork& target, double tau) const;

 private:
  GcntConfig cfg_;
  NetworkRole role_;
  std::size_t input_dim_;
  std::size_t output_dim_;
  ad::ParameterSet params_;
  LinearParams obs1_;
  LinearParams obs2_;
  std::optional<GcnStack> gcn_;
  std::optional<std::size_t> morph_proj_;
  TransformerParams transformer_;
  LinearParams decoder_;
  std::optional<std::size_t> log_std_;
};

/// Stacks a K×c matrix `batch` times.
ad::Matrix tile_rows(const ad::Matrix& m, std::size_t batch);

// ---- actor ----------------------------------------------------------------

enum class ActMode { kDeterministic, kTd3Explore, kPpoSample };

/// "deterministic", "td3_explore" or "ppo_sample"; anything else throws.
ActMode parse_act_mode(std::string_view name);

inline constexpr double kInitialLogStd = -0.5;

struct ActionSample {
  ad::Matrix actions;             // (B·K) × action_dim, root rows zero
  ad::Matrix pre_tanh;            // Gaussian sample (ppo_sample) or mean
  std::vector<double> log_prob;   // per sample; ppo_sample only
};

ActionSample actor_act(GcntNetwork& actor, const MorphologyEncoding& enc, const ad::Matrix& obs, std::size_t batch,
                       ActMode mode, Rng& rng, double explore_sigma = 0.126);

/// Differentiable deterministic action tanh(head)·mask.
ad::Var actor_action(const ParamBinding& bind, const GcntNetwork& actor, const MorphologyEncoding& enc,
                     const ad::Matrix& obs, std::size_t batch);

/// Differentiable B×1 log-density of tanh-squashed Gaussian actions given the
/// pre-tanh samples. Root limbs are excluded.
ad::Var actor_log_prob(const ParamBinding& bind, const GcntNetwork& actor, const MorphologyEncoding& enc,
                       const ad::Matrix& obs, const ad::Matrix& pre_tanh, std::size_t batch);

/// log(1 − tanh(u)²) computed stably.
double log1m_tanh_sq(double u);

// ---- critic ---------------------------------------------------------------

/// B×1 values: mean over limbs of the per-limb head output. Q-critics take
/// (B·K)×action_dim actions appended to each limb's observation row.
ad::Var critic_value(const ParamBinding& bind, const GcntNetwork& critic, const MorphologyEncoding& enc,
                     const ad::Matrix& obs, std::optional<ad::Var> actions, std::size_t batch);

// ---- embeddings -----------------------------------------------------------

std::string embedding_csv_header(int model);

/// One CSV row per node: morphology, node, limb type, morphology features.
void export_embeddings(const std::vector<Morphology>& ms, GcntNetwork& net, const std::filesystem::path& path);

}  // namespace morphnet
