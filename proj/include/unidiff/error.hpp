// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unidiff {

enum class ErrorKind {
  kInvalidGrid,
  kStructure,
  kClass,
  kFraming,
  kConfiguration,
  kQuery,
  kVocabulary,
  kCapacity,
  kParameter,
  kUndefinedLoss,
  kDivergence,
  kContract,
  kCacheCoherence,
  kIo,
  kNotFound,
  kConflict,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI, the
// HTTP layer, tests) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace unidiff
