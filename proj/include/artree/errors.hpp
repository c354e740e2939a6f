#pragma once

#include <stdexcept>
#include <string>

namespace artree {

// Malformed or unreadable input data (CSV corpora, feature tables, model
// files). Maps to CLI exit code 2.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structural limits of the compact 9-byte node encoding were exceeded
// (node count, feature index, class id). Maps to CLI exit code 3.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A compact tree failed structural validation (cycle, orphan, index out of
// range). A specialization of FormatError so callers may treat it as data.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Model file framing errors, with a machine-checkable kind.
class SerializeError : public FormatError {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, SizeMismatch };

  SerializeError(Kind kind, const std::string& what)
      : FormatError(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace artree
