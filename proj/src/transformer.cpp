#include "morphnet/transformer.hpp"

#include <algorithm>
#include <stdexcept>

namespace morphnet {

void TransformerConfig::validate() const {
  if (layers < 1 || heads < 1 || model < 1 || feedforward < 1 || max_distance < 1) {
    throw std::invalid_argument("transformer: all sizes must be positive");
  }
  if (model % heads != 0) throw std::invalid_argument("transformer: model width must be divisible by heads");
}

TransformerParams make_transformer(ad::ParameterSet& set, const std::string& prefix, const TransformerConfig& cfg,
                                   bool with_distance, Rng& rng) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.model);
  const auto ff = static_cast<std::size_t>(cfg.feedforward);
  TransformerParams tp;
  tp.config = cfg;
  if (with_distance) {
    tp.distance_table = set.add(prefix + ".distance_table",
                                ad::Matrix(static_cast<std::size_t>(cfg.max_distance) + 1, static_cast<std::size_t>(cfg.heads)));
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    TransformerBlockParams b;
    b.ln1_gain = set.add(p + ".ln1.gain", ad::Matrix(1, d, 1.0));
    b.ln1_bias = set.add(p + ".ln1.bias", ad::Matrix(1, d));
    b.attn.wq = set.add(p + ".attn.Wq", glorot_uniform(d, d, rng));
    b.attn.wk = set.add(p + ".attn.Wk", glorot_uniform(d, d, rng));
    b.attn.wv = set.add(p + ".attn.Wv", glorot_uniform(d, d, rng));
    b.attn.wo = set.add(p + ".attn.Wo", glorot_uniform(d, d, rng));
    b.ln2_gain = set.add(p + ".ln2.gain", ad::Matrix(1, d, 1.0));
    b.ln2_bias = set.add(p + ".ln2.bias", ad::Matrix(1, d));
    b.ff1 = make_linear(set, p + ".ff1", d, ff, rng);
    b.ff2 = make_linear(set, p + ".ff2", ff, d, rng);
    tp.blocks.push_back(b);
  }
  tp.final_gain = set.add(prefix + ".final_ln.gain", ad::Matrix(1, d, 1.0));
  tp.final_bias = set.add(prefix + ".final_ln.bias", ad::Matrix(1, d));
  return tp;
}

std::vector<int> clamp_distances(const IntMatrix& d, int max_distance) {
  std::vector<int> out(d.data.size());
  std::transform(d.data.begin(), d.data.end(), out.begin(), [max_distance](int v) { return std::min(v, max_distance); });
  return out;
}

ad::Var distance_bias(const ParamBinding& bind, std::size_t table, const std::vector<int>& clamped, std::size_t k) {
  return ad::lookup_bias(bind(table), clamped, k);
}

ad::Var biased_attention(const ParamBinding& bind, ad::Var x, std::optional<ad::Var> bias,
                         const AttentionLayerParams& p, std::size_t heads, std::size_t group,
                         ad::Matrix* weights_out) {
  const ad::Var q = ad::matmul(x, bind(p.wq));
  const ad::Var k = ad::matmul(x, bind(p.wk));
  const ad::Var v = ad::matmul(x, bind(p.wv));
  return ad::matmul(ad::attention(q, k, v, bias, heads, group, weights_out), bind(p.wo));
}

ad::Var transformer_block(const ParamBinding& bind, ad::Var x, std::optional<ad::Var> bias,
                          const TransformerBlockParams& p, std::size_t heads, std::size_t group) {
  const ad::Var n1 = ad::layer_norm(x, bind(p.ln1_gain), bind(p.ln1_bias));
  const ad::Var x1 = ad::add(x, biased_attention(bind, n1, bias, p.attn, heads, group));
  const ad::Var n2 = ad::layer_norm(x1, bind(p.ln2_gain), bind(p.ln2_bias));
  const ad::Var ff = linear(bind, ad::relu(linear(bind, n2, p.ff1)), p.ff2);
  return ad::add(x1, ff);
}

ad::Var transformer_forward(const ParamBinding& bind, ad::Var x, std::optional<ad::Var> bias,
                            const TransformerParams& p, std::size_t group) {
  const auto heads = static_cast<std::size_t>(p.config.heads);
  for (const auto& block : p.blocks) x = transformer_block(bind, x, bias, block, heads, group);
  return ad::layer_norm(x, bind(p.final_gain), bind(p.final_bias));
}

}  // namespace morphnet
