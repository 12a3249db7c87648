#pragma once

// Minimal sectioned key = value files:
//
//   # comment
//   [section]
//   key = 12
//   names = ["a", "b"]
//
// Strings may be bare or double-quoted; lists are bracketed and comma separated.

#include <string>
#include <utility>
#include <vector>

#include "morphnet/gcnt.hpp"

namespace morphnet {

/// Bad configuration text or values. Carries the origin and line when known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IniEntry {
  std::string key;
  std::string value;
  int line = 0;
};

struct IniSection {
  std::string name;
  std::vector<IniEntry> entries;
  int line = 0;
};

struct IniDocument {
  std::string origin;
  std::vector<IniSection> sections;

  const IniSection* find(const std::string& name) const;
};

IniDocument parse_ini(const std::string& text, const std::string& origin = "<string>");
IniDocument load_ini(const std::string& path);

int parse_int(const std::string& v);
std::uint64_t parse_u64(const std::string& v);
double parse_double(const std::string& v);
bool parse_bool(const std::string& v);
std::string parse_string(const std::string& v);
std::vector<std::string> parse_list(const std::string& v);
std::vector<int> parse_int_list(const std::string& v);

std::string format_double(double v);
std::string format_bool(bool v);
std::string format_string(const std::string& v);
std::string format_int_list(const std::vector<int>& v);
std::string format_string_list(const std::vector<std::string>& v);

/// Applies one [net] entry; unknown keys throw ConfigError.
void set_net_key(GcntConfig& cfg, const std::string& key, const std::string& value);
/// Every [net] key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> net_entries(const GcntConfig& cfg);

}  // namespace morphnet
