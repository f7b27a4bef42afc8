// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace spt {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (class label, flat offset) is outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An argument value is outside the accepted domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A loss or value became NaN or infinite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration: bad model config, dangling module targets,
/// plan built against a different registry.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training diverged.
class RunError : public Error {
 public:
  using Error::Error;
};

}  // namespace spt
