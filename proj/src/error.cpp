// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/error.hpp"

namespace unidiff {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidGrid: return "invalid-grid";
    case ErrorKind::kStructure: return "structure";
    case ErrorKind::kClass: return "class";
    case ErrorKind::kFraming: return "framing";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kQuery: return "query";
    case ErrorKind::kVocabulary: return "vocabulary";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kUndefinedLoss: return "undefined-loss";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kCacheCoherence: return "cache-coherence";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kConflict: return "conflict";
  }
  return "unknown";
}

}  // namespace unidiff
