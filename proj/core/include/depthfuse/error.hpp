#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace depthfuse {

// Invalid shapes, specs, or configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, manifests, depth values).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A binary file that does not match its declared layout.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : DataError(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::uint64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

class ManifestError : public DataError {
 public:
  ManifestError(const std::string& what, std::size_t line)
      : DataError("manifest line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Metric or loss evaluation on an empty or invalid pixel set.
class EvaluationError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace depthfuse
