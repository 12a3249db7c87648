#pragma once

// Pre-norm transformer whose attention scores carry a learnable per-head bias
// looked up from the hop distance between limbs.

#include <optional>
#include <string>
#include <vector>

#include "morphnet/binding.hpp"
#include "morphnet/morphology.hpp"

namespace morphnet {

struct TransformerConfig {
  int layers = 3;
  int heads = 2;
  int model = 128;
  int feedforward = 256;
  /// Distances beyond this share the last embedding row.
  int max_distance = 16;

  void validate() const;
};

struct AttentionLayerParams {
  std::size_t wq = 0;
  std::size_t wk = 0;
  std::size_t wv = 0;
  std::size_t wo = 0;
};

struct TransformerBlockParams {
  std::size_t ln1_gain = 0;
  std::size_t ln1_bias = 0;
  AttentionLayerParams attn;
  std::size_t ln2_gain = 0;
  std::size_t ln2_bias = 0;
  LinearParams ff1;
  LinearParams ff2;
};

struct TransformerParams {
  TransformerConfig config;
  std::vector<TransformerBlockParams> blocks;
  std::size_t final_gain = 0;
  std::size_t final_bias = 0;
  /// (max_distance + 1) × heads; absent when the distance path is ablated.
  std::optional<std::size_t> distance_table;
};

TransformerParams make_transformer(ad::ParameterSet& set, const std::string& prefix, const TransformerConfig& cfg,
                                   bool with_distance, Rng& rng);

/// Row-major K×K table-row indices: min(D[i][j], max_distance).
std::vector<int> clamp_distances(const IntMatrix& d, int max_distance);

/// (heads·K)×K bias with bias[h·K+i][j] = table[min(D[i][j], d_max)][h].
ad::Var distance_bias(const ParamBinding& bind, std::size_t table, const std::vector<int>& clamped, std::size_t k);

/// Multi-head attention over blocks of `group` rows; bias may be absent.
ad::Var biased_attention(const ParamBinding& bind, ad::Var x, std::optional<ad::Var> bias,
                         const AttentionLayerParams& p, std::size_t heads, std::size_t group,
                         ad::Matrix* weights_out = nullptr);

ad::Var transformer_block(const ParamBinding& bind, ad::Var x, std::optional<ad::Var> bias,
                          const TransformerBlockParams& p, std::size_t heads, std::size_t group);

/// All blocks (sharing one bias) followed by a final layer norm.
ad::Var transformer_forward(const ParamBinding& bind, ad::Var x, std::optional<ad::Var> bias,
                            const TransformerParams& p, std::size_t group);

}  // namespace morphnet
