#include "morphnet/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"

namespace morphnet {

using Json = nlohmann::json;

Morphology Morphology::make(std::string name, std::vector<int> limb_types, std::vector<Edge> edges, int root) {
  Morphology m;
  m.name = std::move(name);
  m.num_nodes = static_cast<int>(limb_types.size());
  m.root = root;
  m.limb_types = std::move(limb_types);
  for (auto& [a, b] : edges) {
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  m.edges = std::move(edges);
  return m;
}

std::vector<std::vector<int>> Morphology::neighbors() const {
  std::vector<std::vector<int>> nb(static_cast<std::size_t>(num_nodes));
  for (const auto& [a, b] : edges) {
    nb[static_cast<std::size_t>(a)].push_back(b);
    nb[static_cast<std::size_t>(b)].push_back(a);
  }
  return nb;
}

void validate(const Morphology& m) {
  using Kind = ValidationError::Kind;
  const std::string tag = "morphology '" + m.name + "': ";
  if (m.num_nodes < 1) throw ValidationError(Kind::kEmpty, tag + "needs at least one node");
  if (m.limb_types.size() != static_cast<std::size_t>(m.num_nodes)) {
    throw ValidationError(Kind::kBadTypes, tag + "limb_types has " + std::to_string(m.limb_types.size()) +
                                               " entries for " + std::to_string(m.num_nodes) + " nodes");
  }
  for (int t : m.limb_types) {
    if (t < 0) throw ValidationError(Kind::kBadTypes, tag + "negative limb type " + std::to_string(t));
  }
  if (m.root < 0 || m.root >= m.num_nodes) {
    throw ValidationError(Kind::kBadRoot, tag + "root " + std::to_string(m.root) + " out of range");
  }
  std::set<Edge> seen;
  for (auto [a, b] : m.edges) {
    if (a < 0 || b < 0 || a >= m.num_nodes || b >= m.num_nodes) {
      throw ValidationError(Kind::kBadIndex,
                            tag + "edge (" + std::to_string(a) + "," + std::to_string(b) + ") references a bad node");
    }
    if (a == b) throw ValidationError(Kind::kSelfLoop, tag + "self-loop on node " + std::to_string(a));
    if (a > b) std::swap(a, b);
    if (!seen.insert({a, b}).second) {
      throw ValidationError(Kind::kDuplicateEdge,
                            tag + "duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
    }
  }
  const auto nb = m.neighbors();
  std::vector<bool> reached(static_cast<std::size_t>(m.num_nodes), false);
  std::vector<int> stack{m.root};
  reached[static_cast<std::size_t>(m.root)] = true;
  int count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : nb[static_cast<std::size_t>(v)]) {
      if (!reached[static_cast<std::size_t>(u)]) {
        reached[static_cast<std::size_t>(u)] = true;
        ++count;
        stack.push_back(u);
      }
    }
  }
  if (count != m.num_nodes) {
    throw ValidationError(Kind::kDisconnected, tag + "graph is disconnected (" + std::to_string(count) + " of " +
                                                   std::to_string(m.num_nodes) + " nodes reachable from root)");
  }
}

IntMatrix adjacency(const Morphology& m) {
  IntMatrix a(static_cast<std::size_t>(m.num_nodes));
  for (const auto& [i, j] : m.edges) {
    a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1;
    a(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = 1;
  }
  return a;
}

ad::Matrix normalized_adjacency(const IntMatrix& a) {
  const std::size_t k = a.n;
  std::vector<double> deg(k, 1.0);  // self-loop from + I
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) deg[i] += a(i, j);
  ad::Matrix out(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double tilde = (i == j ? 1.0 : 0.0) + a(i, j);
      if (tilde != 0.0) out(i, j) = tilde / std::sqrt(deg[i] * deg[j]);
    }
  }
  return out;
}

IntMatrix floyd_distances(const Morphology& m) {
  const std::size_t k = static_cast<std::size_t>(m.num_nodes);
  constexpr int kInf = std::numeric_limits<int>::max() / 4;
  IntMatrix d(k, kInf);
  for (std::size_t i = 0; i < k; ++i) d(i, i) = 0;
  for (const auto& [i, j] : m.edges) {
    d(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1;
    d(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = 1;
  }
  for (std::size_t via = 0; via < k; ++via)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) d(i, j) = std::min(d(i, j), d(i, via) + d(via, j));
  for (int v : d.data) {
    if (v >= kInf) throw ValidationError(ValidationError::Kind::kDisconnected, "floyd_distances: graph is disconnected");
  }
  return d;
}

Morphology permute(const Morphology& m, const std::vector<int>& p) {
  const std::size_t k = static_cast<std::size_t>(m.num_nodes);
  if (p.size() != k) throw ContractError("permute: permutation length does not match node count");
  std::vector<bool> hit(k, false);
  for (int v : p) {
    if (v < 0 || static_cast<std::size_t>(v) >= k || hit[static_cast<std::size_t>(v)]) {
      throw ContractError("permute: not a bijection on [0, K)");
    }
    hit[static_cast<std::size_t>(v)] = true;
  }
  std::vector<int> types(k);
  for (std::size_t i = 0; i < k; ++i) types[static_cast<std::size_t>(p[i])] = m.limb_types[i];
  std::vector<Edge> edges;
  edges.reserve(m.edges.size());
  for (const auto& [a, b] : m.edges) edges.emplace_back(p[static_cast<std::size_t>(a)], p[static_cast<std::size_t>(b)]);
  return Morphology::make(m.name, std::move(types), std::move(edges), p[static_cast<std::size_t>(m.root)]);
}

std::vector<int> depths(const Morphology& m) {
  const auto nb = m.neighbors();
  std::vector<int> depth(static_cast<std::size_t>(m.num_nodes), -1);
  std::queue<int> q;
  depth[static_cast<std::size_t>(m.root)] = 0;
  q.push(m.root);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int u : nb[static_cast<std::size_t>(v)]) {
      if (depth[static_cast<std::size_t>(u)] < 0) {
        depth[static_cast<std::size_t>(u)] = depth[static_cast<std::size_t>(v)] + 1;
        q.push(u);
      }
    }
  }
  return depth;
}

// ---- JSON -----------------------------------------------------------------

namespace {

Morphology from_json(const Json& j, const std::string& origin) {
  if (!j.is_object()) throw ParseError(origin + ": morphology must be a JSON object");
  for (const char* key : {"name", "num_nodes", "root", "limb_types", "edges"}) {
    if (!j.contains(key)) throw ParseError(origin + ": missing field \"" + key + "\"");
  }
  try {
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ParseError(origin + ": each edge must be a pair [i, j]");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    Morphology m = Morphology::make(j.at("name").get<std::string>(), j.at("limb_types").get<std::vector<int>>(),
                                    std::move(edges), j.at("root").get<int>());
    m.num_nodes = j.at("num_nodes").get<int>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

Json to_json(const Morphology& m) {
  Json edges = Json::array();
  for (const auto& [a, b] : m.edges) edges.push_back({a, b});
  Json j;
  j["name"] = m.name;
  j["num_nodes"] = m.num_nodes;
  j["root"] = m.root;
  j["limb_types"] = m.limb_types;
  j["edges"] = std::move(edges);
  return j;
}

Json parse_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

Morphology parse_morphology(const std::string& text, const std::string& origin) {
  Morphology m = from_json(parse_text(text, origin), origin);
  validate(m);
  return m;
}

std::string morphology_to_json(const Morphology& m) { return to_json(m).dump(2) + "\n"; }

Morphology load_morphology(const std::filesystem::path& path) { return parse_morphology(read_file(path), path.string()); }

void save_morphology(const Morphology& m, const std::filesystem::path& path) {
  write_file(path, morphology_to_json(m));
}

std::vector<Morphology> load_morphology_set(const std::filesystem::path& path) {
  const Json j = parse_text(read_file(path), path.string());
  std::vector<Morphology> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(from_json(j[i], path.string() + "[" + std::to_string(i) + "]"));
  } else {
    out.push_back(from_json(j, path.string()));
  }
  for (const auto& m : out) validate(m);
  return out;
}

void save_morphology_set(const std::vector<Morphology>& ms, const std::filesystem::path& path) {
  Json arr = Json::array();
  for (const auto& m : ms) arr.push_back(to_json(m));
  write_file(path, arr.dump(2) + "\n");
}

}  // namespace morphnet
