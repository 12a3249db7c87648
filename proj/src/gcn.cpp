#include "morphnet/gcn.hpp"

namespace morphnet {

GcnStack make_gcn_stack(ad::ParameterSet& set, const std::string& prefix, int num_types, const GcnConfig& cfg,
                        Rng& rng) {
  if (cfg.layers < 1 || cfg.width < 1) throw std::invalid_argument("gcn: layers and width must be positive");
  const auto d = static_cast<std::size_t>(cfg.width);
  GcnStack stack;
  stack.config = cfg;
  stack.input_embed = set.add(prefix + ".embed", glorot_uniform(static_cast<std::size_t>(num_types), d, rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    GcnLayerParams layer;
    layer.w1 = set.add(p + ".W1", glorot_uniform(d, d, rng));
    layer.w2 = set.add(p + ".W2", glorot_uniform(d, d, rng));
    stack.layers.push_back(layer);
  }
  return stack;
}

ad::Matrix one_hot_features(const Morphology& m, int num_types) {
  ad::Matrix x(static_cast<std::size_t>(m.num_nodes), static_cast<std::size_t>(num_types));
  for (std::size_t v = 0; v < x.rows(); ++v) {
    const int t = m.limb_types[v];
    if (t < 0 || t >= num_types) {
      throw ContractError("limb type " + std::to_string(t) + " outside vocabulary of size " + std::to_string(num_types));
    }
    x(v, static_cast<std::size_t>(t)) = 1.0;
  }
  return x;
}

ad::Var gcn_layer_forward(ad::Var h, ad::Var a_hat, ad::Var w1, ad::Var w2) {
  return ad::add(ad::matmul(ad::relu(ad::matmul(ad::matmul(a_hat, h), w1)), w2), h);
}

ad::Var gcn_stack_forward(const ParamBinding& bind, const ad::Matrix& one_hot, const ad::Matrix& a_hat,
                          const GcnStack& stack) {
  ad::Tape& t = bind.tape;
  const ad::Var a = t.constant(a_hat);
  ad::Var h = ad::matmul(t.constant(one_hot), bind(stack.input_embed));
  for (const auto& layer : stack.layers) h = gcn_layer_forward(h, a, bind(layer.w1), bind(layer.w2));
  return h;
}

ad::Var gcn_stack_forward(const ParamBinding& bind, const Morphology& m, int num_types, const GcnStack& stack) {
  return gcn_stack_forward(bind, one_hot_features(m, num_types), normalized_adjacency(adjacency(m)), stack);
}

}  // namespace morphnet
