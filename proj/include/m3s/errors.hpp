// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace m3s {

// Invalid shapes, hyperparameters or flag combinations.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or inconsistent input data (corpus, token ids, alignments).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Masked reduction with nothing left to reduce over.
class PoolingError : public DataError {
 public:
  explicit PoolingError(const std::string& what) : DataError(what) {}
};

// NaN/Inf produced by an operator, or a zero-norm vector where a direction is needed.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Caller broke a documented precondition (non-deterministic gradcheck target, length mismatch).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Checkpoint / binary file could not be read back.
class LoadError : public std::runtime_error {
 public:
  explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace m3s
