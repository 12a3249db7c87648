#pragma once

// Ring buffer of transitions for a single morphology, so every sampled batch
// shares one limb count.

#include <cstddef>
#include <string>
#include <vector>

#include "morphnet/autodiff.hpp"
#include "morphnet/rng.hpp"

namespace morphnet {

struct TransitionBatch {
  std::size_t size = 0;
  ad::Matrix obs;       // (B·K) × obs_dim
  ad::Matrix actions;   // (B·K) × action_dim
  std::vector<double> rewards;
  ad::Matrix next_obs;  // (B·K) × obs_dim
  std::vector<double> dones;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::string morphology, std::size_t k, std::size_t obs_dim, std::size_t action_dim,
               std::size_t capacity);

  const std::string& morphology() const { return morphology_; }
  std::size_t k() const { return k_; }
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  /// Overwrites the oldest transition once full.
  void add(const ad::Matrix& obs, const ad::Matrix& actions, double reward, const ad::Matrix& next_obs, bool done);

  /// min(batch, size()) distinct transitions chosen uniformly.
  TransitionBatch sample(std::size_t batch, Rng& rng) const;

  /// Indices (into insertion slots) sample() would draw; exposed for tests.
  static std::vector<std::size_t> choose(std::size_t n, std::size_t count, Rng& rng);

 private:
  std::string morphology_;
  std::size_t k_;
  std::size_t obs_dim_;
  std::size_t action_dim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  std::vector<double> obs_;
  std::vector<double> actions_;
  std::vector<double> rewards_;
  std::vector<double> next_obs_;
  std::vector<double> dones_;
};

}  // namespace morphnet
