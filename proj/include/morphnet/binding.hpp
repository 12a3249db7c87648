#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "morphnet/autodiff.hpp"
#include "morphnet/rng.hpp"

namespace morphnet {

// Binds parameters of one set onto a tape, either trainable (gradients flow
// into Parameter::grad) or frozen.
struct ParamBinding {
  ad::Tape& tape;
  ad::ParameterSet& params;
  bool trainable = true;

  ad::Var operator()(std::size_t index) const {
    return trainable ? tape.param(params[index]) : tape.frozen(params[index]);
  }
};

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
inline ad::Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  ad::Matrix w(fan_in, fan_out);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  return w;
}

/// A dense layer x·W + b with b stored as a 1×out row.
struct LinearParams {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

inline LinearParams make_linear(ad::ParameterSet& set, const std::string& prefix, std::size_t in, std::size_t out,
                                Rng& rng) {
  LinearParams p;
  p.weight = set.add(prefix + ".W", glorot_uniform(in, out, rng));
  p.bias = set.add(prefix + ".b", ad::Matrix(1, out));
  return p;
}

inline ad::Var linear(const ParamBinding& bind, ad::Var x, const LinearParams& p) {
  return ad::add(ad::matmul(x, bind(p.weight)), bind(p.bias));
}

}  // namespace morphnet
