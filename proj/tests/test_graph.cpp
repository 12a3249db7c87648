#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "graph_oracles.hpp"
#include "morphnet/env.hpp"
#include "morphnet/gcn.hpp"
#include "morphnet/wl.hpp"
#include "test_util.hpp"

using namespace morphnet;
using namespace testutil;

namespace {

ValidationError::Kind kind_of(const Morphology& m) {
  try {
    validate(m);
  } catch (const ValidationError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ValidationError for " << m.name;
  return ValidationError::Kind::kEmpty;
}

std::multiset<std::string> color_multiset(const WlColors& colors) {
  std::multiset<std::string> out;
  for (std::size_t r = 0; r < colors.size(); ++r)
    for (const auto& c : colors[r]) out.insert(std::to_string(r) + ":" + c);
  return out;
}

}  // namespace

TEST(Morphology, ValidationNamesTheViolation) {
  using K = ValidationError::Kind;
  EXPECT_EQ(kind_of(Morphology::make("e", {}, {})), K::kEmpty);
  EXPECT_EQ(kind_of(Morphology::make("d", {0, 1, 2}, {{0, 1}})), K::kDisconnected);
  EXPECT_EQ(kind_of(Morphology::make("s", {0, 1}, {{0, 1}, {1, 1}})), K::kSelfLoop);
  EXPECT_EQ(kind_of(Morphology::make("i", {0, 1}, {{0, 2}})), K::kBadIndex);
  EXPECT_EQ(kind_of(Morphology::make("u", {0, 1}, {{0, 1}, {1, 0}})), K::kDuplicateEdge);
  EXPECT_EQ(kind_of(Morphology::make("t", {0, -1}, {{0, 1}})), K::kBadTypes);
  EXPECT_EQ(kind_of(Morphology::make("r", {0, 1}, {{0, 1}}, 5)), K::kBadRoot);
  EXPECT_NO_THROW(validate(chain_walker(4)));
}

TEST(Morphology, FloydMatchesBreadthFirstSearch) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(12));
    const Morphology m = random_connected_graph(k, rng, rng.uniform(0.0, 0.5));
    EXPECT_EQ(floyd_distances(m), bfs_distances(m)) << "trial " << trial;
  }
}

TEST(Morphology, FloydRejectsDisconnectedGraphs) {
  EXPECT_THROW(floyd_distances(Morphology::make("d", {0, 0, 0}, {{0, 1}})), ValidationError);
}

TEST(Morphology, PermutationRelabelsStructure) {
  Rng rng(2);
  const Morphology m = random_tree(7, rng);
  const auto p = random_permutation(7, rng);
  const Morphology pm = permute(m, p);
  const IntMatrix d = floyd_distances(m), pd = floyd_distances(pm);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(pm.limb_types[static_cast<std::size_t>(p[i])], m.limb_types[i]);
    for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(pd(static_cast<std::size_t>(p[i]), static_cast<std::size_t>(p[j])), d(i, j));
  }
  EXPECT_EQ(pm.root, p[static_cast<std::size_t>(m.root)]);
  EXPECT_THROW(permute(m, {0, 0, 1, 2, 3, 4, 5}), ContractError);
}

TEST(Morphology, NormalizedAdjacencyIsSymmetricWithUnitSelfWeightOnIsolatedNode) {
  const Morphology m = Morphology::make("p", {0, 1, 2}, {{0, 1}, {1, 2}});
  const ad::Matrix a = normalized_adjacency(adjacency(m));
  EXPECT_DOUBLE_EQ(a(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(a(1, 1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a(0, 1), 1.0 / std::sqrt(6.0));
  EXPECT_DOUBLE_EQ(a(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(normalized_adjacency(adjacency(Morphology::make("one", {0}, {})))(0, 0), 1.0);
}

TEST(Morphology, DepthsFromRoot) {
  const Morphology m = Morphology::make("p", {0, 1, 2, 3}, {{0, 1}, {1, 2}, {1, 3}}, 2);
  EXPECT_EQ(depths(m), (std::vector<int>{2, 1, 0, 2}));
}

TEST(Morphology, JsonRoundTrip) {
  const Morphology m = chain_walker(5);
  EXPECT_EQ(parse_morphology(morphology_to_json(m)), m);
  const auto dir = std::filesystem::temp_directory_path() / "morphnet_test_json";
  std::filesystem::create_directories(dir);
  const std::vector<Morphology> set{chain_walker(3), chain_walker(4)};
  save_morphology_set(set, dir / "set.json");
  EXPECT_EQ(load_morphology_set(dir / "set.json"), set);
  save_morphology(m, dir / "one.json");
  EXPECT_EQ(load_morphology_set(dir / "one.json"), std::vector<Morphology>{m});
}

TEST(Morphology, MalformedJsonIsAParseError) {
  EXPECT_THROW(parse_morphology("{"), ParseError);
  EXPECT_THROW(parse_morphology(R"({"name": "x"})"), ParseError);
  EXPECT_THROW(parse_morphology(R"({"name": "x", "num_nodes": 2, "limb_types": [0, 1], "edges": [[0, 1, 2]], "root": 0})"),
               ParseError);
}

TEST(Morphology, InvalidJsonStructureIsRejected) {
  EXPECT_THROW(parse_morphology(R"({"name": "x", "num_nodes": 3, "limb_types": [0, 1, 2], "edges": [[0, 1]], "root": 0})"),
               ValidationError);
}

TEST(Wl, SignatureSortsNeighbourColours) {
  EXPECT_EQ(wl_signature("a", {"c", "b", "a"}), "a|a,b,c");
  EXPECT_EQ(wl_signature("x", {}), "x|");
}

TEST(Wl, FnvKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Wl, HistogramIsPermutationInvariant) {
  Rng rng(4);
  const WlConfig cfg{3, 32};
  for (int trial = 0; trial < 200; ++trial) {
    const Morphology m = random_tree(1 + static_cast<int>(rng.index(10)), rng);
    const Morphology pm = permute(m, random_permutation(static_cast<std::size_t>(m.num_nodes), rng));
    EXPECT_EQ(wl_histogram(m, cfg).counts, wl_histogram(pm, cfg).counts);
  }
}

TEST(Wl, HistogramCountsEveryNodeEveryRound) {
  const WlConfig cfg{3, 16};
  const ColorHistogram h = wl_histogram(chain_walker(6), cfg);
  EXPECT_EQ(h.total(), 6 * 4);
  const ad::Matrix n = h.normalized();
  double s = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) s += n[i];
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Wl, SeparatesNonIsomorphicTrees) {
  const WlConfig cfg{3, 32};
  std::vector<std::multiset<std::string>> sets;
  for (int n = 1; n <= 8; ++n)
    for (const auto& t : all_trees(n)) sets.push_back(color_multiset(wl_refine(t, cfg)));
  ASSERT_EQ(sets.size(), 1u + 1 + 1 + 2 + 3 + 6 + 11 + 23);
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j) EXPECT_NE(sets[i], sets[j]) << i << " vs " << j;
}

TEST(TreeOracle, CanonicalFormIgnoresLabels) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Morphology m = random_tree(2 + static_cast<int>(rng.index(8)), rng);
    EXPECT_EQ(tree_canonical(m), tree_canonical(permute(m, random_permutation(static_cast<std::size_t>(m.num_nodes), rng))));
  }
}

TEST(Gcn, LayerMatchesPerNodeOracle) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(10));
    const Morphology m = random_connected_graph(k, rng, 0.3);
    const std::size_t d = 1 + rng.index(6);
    const ad::Matrix h = random_matrix(static_cast<std::size_t>(k), d, rng);
    const ad::Matrix w1 = random_matrix(d, d, rng), w2 = random_matrix(d, d, rng);
    ad::Tape t(false);
    const ad::Matrix got = gcn_layer_forward(t.constant(h), t.constant(normalized_adjacency(adjacency(m))),
                                             t.constant(w1), t.constant(w2))
                               .value();
    EXPECT_LT(ad::max_abs_diff(got, gcn_layer_oracle(m, h, w1, w2)), 1e-12);
  }
}

TEST(Gcn, OneHotRejectsTypesOutsideVocabulary) {
  EXPECT_THROW(one_hot_features(Morphology::make("x", {0, 7}, {{0, 1}}), 5), ContractError);
}
