// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "unidiff/sampler.hpp"

namespace unidiff {

struct FidelityReport {
  double savings_fraction = 0.0;  // reused / masked token-forwards of the cached run
  double final_agreement = 0.0;   // share of equal cells in the two final grids
  long masked_total = 0;
  long reused_total = 0;
  long computed_masked = 0;       // instrumentation counter of the cached run
  bool accounting_holds = false;  // computed_masked == masked_total - reused_total
  // Mean cross-step cosine similarity of baseline logits at the positions the
  // cached run reused, per step (NaN where nothing was reused).
  std::vector<double> per_step_similarity;
  // (max logit at step t-1, cosine(logits t-1, logits t)) for every cell masked
  // in two consecutive baseline steps.
  std::vector<std::pair<double, double>> scatter;
  double spearman = 0.0;
};

// Baseline must be recorded with record_logits; both runs share shape and
// step count. Throws kContract otherwise.
FidelityReport fidelity_report(const Trajectory& baseline, const Trajectory& cached);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Spearman rank correlation with average ranks for ties; 0 when either
// series is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace unidiff
