// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uid_decode {

using TokenId = std::uint32_t;

/// Bad user input: hyperparameters, config files, CLI values. Maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A probability vector that is not a distribution (range or normalization breach).
class InvalidDistribution : public std::invalid_argument {
 public:
  explicit InvalidDistribution(const std::string& what) : std::invalid_argument(what) {}
};

/// Failure of a probability source at run time. Maps to exit code 1.
class SourceError : public std::runtime_error {
 public:
  explicit SourceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace uid_decode
