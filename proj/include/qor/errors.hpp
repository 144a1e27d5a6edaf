// Copyright (c) 2026, the qor-predict authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace qor {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shapes do not line up for the requested operation.
struct ShapeError : Error {
  using Error::Error;
};

// A parameter is outside its documented domain (e.g. dropout p >= 1).
struct ValueError : Error {
  using Error::Error;
};

// An index (token id, row id, segment id) is out of range.
struct IndexError : Error {
  using Error::Error;
};

// A text input could not be parsed; the message carries the line number.
struct ParseError : Error {
  using Error::Error;
};

// A parsed structure violates a documented invariant (graph checks).
struct ValidationError : Error {
  using Error::Error;
};

// A binary artifact is malformed, truncated or from an incompatible config.
struct FormatError : Error {
  using Error::Error;
};

// A configuration key or value is invalid. CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// An optional external capability (synthesis tool) is unavailable.
struct CapabilityError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace qor
