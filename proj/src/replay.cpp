#include "morphnet/replay.hpp"

#include <algorithm>
#include <unordered_set>

namespace morphnet {

ReplayBuffer::ReplayBuffer(std::string morphology, std::size_t k, std::size_t obs_dim, std::size_t action_dim,
                           std::size_t capacity)
    : morphology_(std::move(morphology)), k_(k), obs_dim_(obs_dim), action_dim_(action_dim), capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::add(const ad::Matrix& obs, const ad::Matrix& actions, double reward, const ad::Matrix& next_obs,
                       bool done) {
  if (obs.rows() != k_ || obs.cols() != obs_dim_ || next_obs.rows() != k_ || next_obs.cols() != obs_dim_ ||
      actions.rows() != k_ || actions.cols() != action_dim_) {
    throw DimensionError("transition shapes do not match buffer for " + morphology_);
  }
  const std::size_t so = k_ * obs_dim_;
  const std::size_t sa = k_ * action_dim_;
  if (size_ < capacity_ && next_ == size_) {
    obs_.insert(obs_.end(), obs.data(), obs.data() + so);
    actions_.insert(actions_.end(), actions.data(), actions.data() + sa);
    rewards_.push_back(reward);
    next_obs_.insert(next_obs_.end(), next_obs.data(), next_obs.data() + so);
    dones_.push_back(done ? 1.0 : 0.0);
  } else {
    std::copy(obs.data(), obs.data() + so, obs_.begin() + static_cast<std::ptrdiff_t>(next_ * so));
    std::copy(actions.data(), actions.data() + sa, actions_.begin() + static_cast<std::ptrdiff_t>(next_ * sa));
    rewards_[next_] = reward;
    std::copy(next_obs.data(), next_obs.data() + so, next_obs_.begin() + static_cast<std::ptrdiff_t>(next_ * so));
    dones_[next_] = done ? 1.0 : 0.0;
  }
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::choose(std::size_t n, std::size_t count, Rng& rng) {
  // Floyd's algorithm: count distinct values from [0, n).
  count = std::min(count, n);
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> seen;
  for (std::size_t j = n - count; j < n; ++j) {
    const std::size_t t = rng.index(j + 1);
    const std::size_t pick = seen.count(t) ? j : t;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

TransitionBatch ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  const std::vector<std::size_t> idx = choose(size_, batch, rng);
  const std::size_t b = idx.size();
  const std::size_t so = k_ * obs_dim_;
  const std::size_t sa = k_ * action_dim_;
  TransitionBatch out;
  out.size = b;
  out.obs = ad::Matrix(b * k_, obs_dim_);
  out.next_obs = ad::Matrix(b * k_, obs_dim_);
  out.actions = ad::Matrix(b * k_, action_dim_);
  out.rewards.resize(b);
  out.dones.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t s = idx[i];
    std::copy_n(obs_.begin() + static_cast<std::ptrdiff_t>(s * so), so, out.obs.data() + i * so);
    std::copy_n(next_obs_.begin() + static_cast<std::ptrdiff_t>(s * so), so, out.next_obs.data() + i * so);
    std::copy_n(actions_.begin() + static_cast<std::ptrdiff_t>(s * sa), sa, out.actions.data() + i * sa);
    out.rewards[i] = rewards_[s];
    out.dones[i] = dones_[s];
  }
  return out;
}

}  // namespace morphnet
