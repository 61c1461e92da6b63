// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "unidiff/model.hpp"

namespace unidiff {

// Max-logit cache. On reuse steps, the masked positions whose previous
// maximal logit is highest keep their previous keys, values and logits
// instead of being recomputed.
struct CacheConfig {
  double cache_ratio = 0.0;    // [0, 1)
  double warmup_ratio = 0.0;   // [0, 1]
  int refresh_interval = 1;    // >= 1

  bool enabled() const { return cache_ratio > 0.0; }
  void validate() const;
};

enum class StepPolicy { kComputeAll, kReuse };

// ComputeAll iff step < ceil(warmup_ratio * T) or
// (step - ceil(warmup_ratio * T)) % refresh_interval == 0.
StepPolicy step_policy(int step_index, int total_steps, const CacheConfig& config);

// Number of warmup steps, ceil(warmup_ratio * T).
int warmup_steps(int total_steps, double warmup_ratio);

// Indices (ascending) of the floor(ratio * n) entries with the largest
// values; ties prefer the lower index.
std::vector<int> select_reused(std::span<const float> max_logits, double cache_ratio);

struct CachedForward {
  std::vector<float> logits;   // n x K
  long computed_rows = 0;      // rows actually run through the network
  long computed_masked = 0;    // of which held MASK
};

// Forward pass that recomputes every position except reuse_set (sequence
// positions). Reused rows return the cached logits verbatim and contribute
// their cached keys/values to attention. Throws kCacheCoherence when a
// reused position has no cache entry.
CachedForward cached_forward(const Model<float>& model, std::span<const TokenId> ids, std::span<const int> reuse_set,
                             KVCache<float>& cache, int step_index, TokenId mask_id);

}  // namespace unidiff
