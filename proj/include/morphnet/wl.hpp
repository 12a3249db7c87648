#pragma once

// Weisfeiler-Lehman colour refinement with a fixed number of rounds, and the
// colour-occurrence histogram used as a global morphology feature.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "morphnet/autodiff.hpp"
#include "morphnet/morphology.hpp"

namespace morphnet {

struct WlConfig {
  int iterations = 3;
  int bins = 32;

  void validate() const;
};

/// colors[r][v]: colour of node v after r refinement rounds (r = 0 is the limb type).
using WlColors = std::vector<std::vector<std::string>>;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text);

/// The canonical string a node's next colour is derived from:
/// "<own colour>|<sorted neighbour colours joined by ','>".
std::string wl_signature(const std::string& own, std::vector<std::string> neighbor_colors);

WlColors wl_refine(const Morphology& m, const WlConfig& cfg);

struct ColorHistogram {
  std::vector<std::int64_t> counts;

  std::int64_t total() const;
  /// counts / total as a 1×bins row.
  ad::Matrix normalized() const;
};

ColorHistogram wl_histogram(const WlColors& colors, const WlConfig& cfg);

/// Convenience: refine then histogram.
ColorHistogram wl_histogram(const Morphology& m, const WlConfig& cfg);

}  // namespace morphnet
