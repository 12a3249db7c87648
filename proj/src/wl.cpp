#include "morphnet/wl.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace morphnet {

void WlConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("wl.iterations must be >= 1");
  if (bins < 4) throw std::invalid_argument("wl.bins must be >= 4");
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string wl_signature(const std::string& own, std::vector<std::string> neighbor_colors) {
  std::sort(neighbor_colors.begin(), neighbor_colors.end());
  std::string s = own;
  s += '|';
  for (std::size_t i = 0; i < neighbor_colors.size(); ++i) {
    if (i > 0) s += ',';
    s += neighbor_colors[i];
  }
  return s;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

WlColors wl_refine(const Morphology& m, const WlConfig& cfg) {
  cfg.validate();
  const auto nb = m.neighbors();
  const std::size_t k = static_cast<std::size_t>(m.num_nodes);
  WlColors colors;
  colors.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  std::vector<std::string> round0(k);
  for (std::size_t v = 0; v < k; ++v) round0[v] = std::to_string(m.limb_types[v]);
  colors.push_back(std::move(round0));
  // Fixed round count: no convergence test.
  for (int r = 0; r < cfg.iterations; ++r) {
    const auto& prev = colors.back();
    std::vector<std::string> next(k);
    for (std::size_t v = 0; v < k; ++v) {
      std::vector<std::string> around;
      around.reserve(nb[v].size());
      for (int u : nb[v]) around.push_back(prev[static_cast<std::size_t>(u)]);
      next[v] = hex64(fnv1a64(wl_signature(prev[v], std::move(around))));
    }
    colors.push_back(std::move(next));
  }
  return colors;
}

std::int64_t ColorHistogram::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

ad::Matrix ColorHistogram::normalized() const {
  ad::Matrix out(1, counts.size());
  const double t = static_cast<double>(total());
  if (t == 0.0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) / t;
  return out;
}

ColorHistogram wl_histogram(const WlColors& colors, const WlConfig& cfg) {
  cfg.validate();
  ColorHistogram h;
  h.counts.assign(static_cast<std::size_t>(cfg.bins), 0);
  for (std::size_t r = 0; r < colors.size(); ++r) {
    for (const auto& c : colors[r]) {
      const std::string key = std::to_string(r) + ":" + c;
      ++h.counts[fnv1a64(key) % static_cast<std::uint64_t>(cfg.bins)];
    }
  }
  return h;
}

ColorHistogram wl_histogram(const Morphology& m, const WlConfig& cfg) { return wl_histogram(wl_refine(m, cfg), cfg); }

}  // namespace morphnet
