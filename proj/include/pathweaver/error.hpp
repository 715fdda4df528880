#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace pathweaver {

enum class ErrorKind {
  Parse,          // malformed JSON or binary payload
  Schema,         // structurally valid input that violates the schema
  EmptyInput,
  Degenerate,     // geometry/topology that cannot be processed
  Format,         // PPR1 container errors
  Config,         // invalid configuration or parameters
  Frame,          // local-frame (anchor) mismatch between inputs
  Size,
  NotFound,
  Validation,
  Corruption,     // event log gaps
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Schema error that remembers the offending feature index.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t feature_index, const std::string& message)
      : Error(ErrorKind::Schema,
              "feature " + std::to_string(feature_index) + ": " + message),
        feature_index_(feature_index) {}

  std::size_t feature_index() const noexcept { return feature_index_; }

 private:
  std::size_t feature_index_;
};

/// PPR1 container error carrying the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& message)
      : Error(ErrorKind::Format,
              message + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Event log corruption; `seq` is the first missing sequence number.
class CorruptionError : public Error {
 public:
  CorruptionError(std::uint64_t seq, const std::string& message)
      : Error(ErrorKind::Corruption, message), seq_(seq) {}

  std::uint64_t seq() const noexcept { return seq_; }

 private:
  std::uint64_t seq_;
};

}  // namespace pathweaver
