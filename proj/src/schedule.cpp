// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "unidiff/error.hpp"

namespace unidiff {

long remask_count(int t, int total_steps, long remaining) {
  require(total_steps >= 1, ErrorKind::kParameter, "total steps must be at least 1");
  require(t >= 1 && t <= total_steps, ErrorKind::kParameter,
          "step " + std::to_string(t) + " outside [1, " + std::to_string(total_steps) + "]");
  require(remaining >= 0, ErrorKind::kParameter, "remaining count must be non-negative");
  if (remaining == 0 || t == total_steps) return 0;
  if (3L * t == 2L * total_steps) return (remaining + 1) / 2;
  const long double angle = std::numbers::pi_v<long double> * t / (2.0L * total_steps);
  const long double k = std::ceil(std::cos(angle) * static_cast<long double>(remaining));
  return static_cast<long>(k);
}

}  // namespace unidiff
