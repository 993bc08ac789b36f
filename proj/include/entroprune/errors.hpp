// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace entroprune {

/// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation applied to a block in the wrong BlockMode.
class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad configuration value, unknown or missing key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corrupt, truncated or mismatched file, or an invalid dataset.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An equivalence or consistency check failed.
class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or value where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace entroprune
