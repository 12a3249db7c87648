#include "morphnet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace morphnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

}  // namespace

const IniSection* IniDocument::find(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

IniDocument parse_ini(const std::string& text, const std::string& origin) {
  IniDocument doc;
  doc.origin = origin;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line) + ": ";
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(where + "unterminated section header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (name.empty()) throw ConfigError(where + "empty section name");
      if (doc.find(name)) throw ConfigError(where + "duplicate section [" + name + "]");
      doc.sections.push_back({name, {}, line});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (doc.sections.empty()) throw ConfigError(where + "entry outside of any section");
    IniEntry e{trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line};
    if (e.key.empty()) throw ConfigError(where + "empty key");
    for (const auto& other : doc.sections.back().entries) {
      if (other.key == e.key) throw ConfigError(where + "duplicate key " + e.key);
    }
    doc.sections.back().entries.push_back(std::move(e));
  }
  return doc;
}

IniDocument load_ini(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_ini(ss.str(), path);
}

int parse_int(const std::string& v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("not an integer: " + v);
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("not an unsigned integer: " + v);
  return out;
}

double parse_double(const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("not a number: " + v);
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("not a boolean (true/false): " + v);
}

std::string parse_string(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (!v.empty() && (v.front() == '"' || v.back() == '"')) throw ConfigError("unbalanced quotes: " + v);
  return v;
}

std::vector<std::string> parse_list(const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') throw ConfigError("not a list: " + v);
  std::vector<std::string> out;
  const std::string body = trim(v.substr(1, v.size() - 2));
  if (body.empty()) return out;
  std::string item;
  std::istringstream in(body);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list element in " + v);
    out.push_back(parse_string(item));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  for (const auto& s : parse_list(v)) out.push_back(parse_int(s));
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

std::string format_string(const std::string& v) { return "\"" + v + "\""; }

std::string format_int_list(const std::vector<int>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

std::string format_string_list(const std::vector<std::string>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_string(v[i]);
  return s + "]";
}

void set_net_key(GcntConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "obs_dim") cfg.obs_dim = parse_int(value);
  else if (key == "num_types") cfg.num_types = parse_int(value);
  else if (key == "model") cfg.model = parse_int(value);
  else if (key == "gcn_layers") cfg.gcn.layers = parse_int(value);
  else if (key == "gcn_width") cfg.gcn.width = parse_int(value);
  else if (key == "wl_iterations") cfg.wl.iterations = parse_int(value);
  else if (key == "wl_bins") cfg.wl.bins = parse_int(value);
  else if (key == "transformer_layers") cfg.transformer_layers = parse_int(value);
  else if (key == "heads") cfg.heads = parse_int(value);
  else if (key == "feedforward") cfg.feedforward = parse_int(value);
  else if (key == "max_distance") cfg.max_distance = parse_int(value);
  else if (key == "action_dim") cfg.action_dim = parse_int(value);
  else if (key == "use_gcn") cfg.use_gcn = parse_bool(value);
  else if (key == "use_wl") cfg.use_wl = parse_bool(value);
  else if (key == "use_distance") cfg.use_distance = parse_bool(value);
  else throw ConfigError("unknown key net." + key);
}

std::vector<std::pair<std::string, std::string>> net_entries(const GcntConfig& cfg) {
  return {
      {"obs_dim", std::to_string(cfg.obs_dim)},
      {"num_types", std::to_string(cfg.num_types)},
      {"model", std::to_string(cfg.model)},
      {"gcn_layers", std::to_string(cfg.gcn.layers)},
      {"gcn_width", std::to_string(cfg.gcn.width)},
      {"wl_iterations", std::to_string(cfg.wl.iterations)},
      {"wl_bins", std::to_string(cfg.wl.bins)},
      {"transformer_layers", std::to_string(cfg.transformer_layers)},
      {"heads", std::to_string(cfg.heads)},
      {"feedforward", std::to_string(cfg.feedforward)},
      {"max_distance", std::to_string(cfg.max_distance)},
      {"action_dim", std::to_string(cfg.action_dim)},
      {"use_gcn", format_bool(cfg.use_gcn)},
      {"use_wl", format_bool(cfg.use_wl)},
      {"use_distance", format_bool(cfg.use_distance)},
  };
}

}  // namespace morphnet
