#pragma once

#include <stdexcept>
#include <string>

namespace morphnet {

/// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of an API contract (non-scalar loss, consumed trace, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A morphology violates one of its structural invariants.
class ValidationError : public std::runtime_error {
 public:
  enum class Kind { kDisconnected, kSelfLoop, kBadIndex, kDuplicateEdge, kBadTypes, kBadRoot, kEmpty };

  ValidationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced non-finite numbers.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace morphnet
