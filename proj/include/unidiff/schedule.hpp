// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace unidiff {

// Number of freshly sampled tokens to hide again after step t of T:
//   k_t = ceil(cos(pi * t / (2T)) * remaining)
// with t in [1, T]. cos is rational on this interval only at t = T (0) and
// 3t = 2T (1/2); those cases are evaluated exactly, everything else in
// extended precision. k_T = 0, so any T-step loop terminates.
// Throws kParameter for T < 1, t outside [1, T] or remaining < 0.
long remask_count(int t, int total_steps, long remaining);

struct StepState {
  int t = 0;
  int total = 0;
  long masked_remaining = 0;
};

}  // namespace unidiff
