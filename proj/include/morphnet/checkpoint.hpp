#pragma once

// Binary checkpoint: "GCNT", u32 format version, u32-length config text
// ([net] and [meta] sections), u32 tensor count, then per tensor a u32-length
// name, u32 rows, u32 cols and rows·cols little-endian fp64 values.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "morphnet/gcnt.hpp"

namespace morphnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Matrix value;
};

struct Checkpoint {
  GcntConfig net;
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  /// True when any tensor is named "<prefix>.<...>".
  bool has_prefix(const std::string& prefix) const;
};

/// Tensors of `net` under "<prefix>.<parameter name>", in enumeration order.
void append_network(Checkpoint& ck, const std::string& prefix, const GcntNetwork& net);

/// Copies "<prefix>.*" tensors into `net`; every parameter must be present
/// with its exact shape, else ContractError.
void restore_network(const Checkpoint& ck, const std::string& prefix, GcntNetwork& net);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
/// Throws ParseError on bad magic, version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace morphnet
