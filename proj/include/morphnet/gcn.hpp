#pragma once

// Residual GCN stack: H' = relu(Â H W1) W2 + H, on one-hot limb-type features
// lifted to the stack width by an input embedding.

#include <string>
#include <vector>

#include "morphnet/binding.hpp"
#include "morphnet/morphology.hpp"

namespace morphnet {

struct GcnConfig {
  int layers = 4;
  int width = 16;
};

struct GcnLayerParams {
  std::size_t w1 = 0;
  std::size_t w2 = 0;
};

struct GcnStack {
  GcnConfig config;
  std::size_t input_embed = 0;  // T × width
  std::vector<GcnLayerParams> layers;
};

GcnStack make_gcn_stack(ad::ParameterSet& set, const std::string& prefix, int num_types, const GcnConfig& cfg,
                        Rng& rng);

/// K×T one-hot rows; throws ContractError on a type outside [0, T).
ad::Matrix one_hot_features(const Morphology& m, int num_types);

ad::Var gcn_layer_forward(ad::Var h, ad::Var a_hat, ad::Var w1, ad::Var w2);

ad::Var gcn_stack_forward(const ParamBinding& bind, const ad::Matrix& one_hot, const ad::Matrix& a_hat,
                          const GcnStack& stack);

/// Computes Â and the one-hot features from m first.
ad::Var gcn_stack_forward(const ParamBinding& bind, const Morphology& m, int num_types, const GcnStack& stack);

}  // namespace morphnet
