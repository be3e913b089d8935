// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace psl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (schedule range, unknown op, empty pair set...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A token or name could not be resolved.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Two artifacts were built against different prompt encoders.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t last_stable_step)
      : Error(what), last_stable_step_(last_stable_step) {}
  std::size_t last_stable_step() const noexcept { return last_stable_step_; }

 private:
  std::size_t last_stable_step_;
};

/// Malformed persisted file; offset is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Bad command-line usage; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace psl
