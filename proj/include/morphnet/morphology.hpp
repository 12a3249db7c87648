#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "morphnet/autodiff.hpp"

namespace morphnet {

/// Global limb-type vocabulary shared by every morphology in an experiment.
enum LimbType : int { kTorso = 0, kThigh = 1, kShin = 2, kFoot = 3, kArm = 4 };
inline constexpr int kNumLimbTypes = 5;

using Edge = std::pair<int, int>;

/// Square integer matrix, row-major.
struct IntMatrix {
  std::size_t n = 0;
  std::vector<int> data;

  IntMatrix() = default;
  explicit IntMatrix(std::size_t size, int fill = 0) : n(size), data(size * size, fill) {}
  int& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  int operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  bool operator==(const IntMatrix&) const = default;
};

// Undirected limb graph. Edges are kept normalized (first < second) and
// sorted, so structurally equal morphologies compare equal.
struct Morphology {
  std::string name;
  int num_nodes = 0;
  int root = 0;
  std::vector<int> limb_types;
  std::vector<Edge> edges;

  /// Builds a morphology with normalized, sorted edges. Duplicates are kept so
  /// that validate() can report them.
  static Morphology make(std::string name, std::vector<int> limb_types, std::vector<Edge> edges, int root = 0);

  std::vector<std::vector<int>> neighbors() const;
  bool operator==(const Morphology&) const = default;
};

/// Throws ValidationError naming the first violated invariant.
void validate(const Morphology& m);

IntMatrix adjacency(const Morphology& m);

/// D̃^{-1/2} (A + I) D̃^{-1/2} with D̃ the degree matrix of A + I.
ad::Matrix normalized_adjacency(const IntMatrix& a);

/// All-pairs hop distances by Floyd-Warshall. Requires a connected graph.
IntMatrix floyd_distances(const Morphology& m);

/// Relabels node i as p[i]. Throws ContractError if p is not a bijection.
Morphology permute(const Morphology& m, const std::vector<int>& p);

/// Hop distance of every node from the root.
std::vector<int> depths(const Morphology& m);

Morphology load_morphology(const std::filesystem::path& path);
void save_morphology(const Morphology& m, const std::filesystem::path& path);

/// Parses one morphology object from JSON text; `origin` labels errors.
Morphology parse_morphology(const std::string& text, const std::string& origin = "<string>");
std::string morphology_to_json(const Morphology& m);

/// A morphology-set file holds either one morphology object or an array of them.
std::vector<Morphology> load_morphology_set(const std::filesystem::path& path);
void save_morphology_set(const std::vector<Morphology>& ms, const std::filesystem::path& path);

}  // namespace morphnet
