// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/mlcache.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "unidiff/error.hpp"

namespace unidiff {

void CacheConfig::validate() const {
  require(cache_ratio >= 0.0 && cache_ratio < 1.0, ErrorKind::kParameter,
          "cache_ratio must lie in [0, 1), got " + std::to_string(cache_ratio));
  require(warmup_ratio >= 0.0 && warmup_ratio <= 1.0, ErrorKind::kParameter,
          "warmup_ratio must lie in [0, 1], got " + std::to_string(warmup_ratio));
  require(refresh_interval >= 1, ErrorKind::kParameter,
          "refresh_interval must be positive, got " + std::to_string(refresh_interval));
}

int warmup_steps(int total_steps, double warmup_ratio) {
  return static_cast<int>(std::ceil(static_cast<long double>(warmup_ratio) * total_steps));
}

StepPolicy step_policy(int step_index, int total_steps, const CacheConfig& config) {
  require(step_index >= 0 && step_index < total_steps, ErrorKind::kParameter,
          "step " + std::to_string(step_index) + " outside [0, " + std::to_string(total_steps) + ")");
  const int warm = warmup_steps(total_steps, config.warmup_ratio);
  if (step_index < warm) return StepPolicy::kComputeAll;
  if ((step_index - warm) % config.refresh_interval == 0) return StepPolicy::kComputeAll;
  return StepPolicy::kReuse;
}

std::vector<int> select_reused(std::span<const float> max_logits, double cache_ratio) {
  const auto n = max_logits.size();
  const auto take = static_cast<std::size_t>(std::floor(static_cast<long double>(cache_ratio) * n));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return max_logits[static_cast<std::size_t>(a)] > max_logits[static_cast<std::size_t>(b)];
  });
  order.resize(take);
  std::sort(order.begin(), order.end());
  return order;
}

CachedForward cached_forward(const Model<float>& model, std::span<const TokenId> ids, std::span<const int> reuse_set,
                             KVCache<float>& cache, int step_index, TokenId mask_id) {
  const int n = static_cast<int>(ids.size());
  std::vector<std::uint8_t> reused(static_cast<std::size_t>(n), 0);
  for (int p : reuse_set) {
    require(p >= 0 && p < n, ErrorKind::kCacheCoherence, "reuse position " + std::to_string(p) + " out of range");
    reused[static_cast<std::size_t>(p)] = 1;
  }
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(n));
  CachedForward out;
  for (int p = 0; p < n; ++p) {
    if (reused[static_cast<std::size_t>(p)]) continue;
    rows.push_back(p);
    if (ids[static_cast<std::size_t>(p)] == mask_id) ++out.computed_masked;
  }
  out.computed_rows = static_cast<long>(rows.size());
  out.logits = forward_rows(model, ids, rows, &cache, step_index);
  return out;
}

}  // namespace unidiff
