// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "unidiff/corpus.hpp"
#include "unidiff/sampler.hpp"

namespace unidiff {

// Number of the sample's questions the oracle answers correctly on `grid`.
int oracle_reward(const GridImage& grid, const std::vector<QAItem>& questions, const Vocabulary& vocab);

struct PromptEval {
  double pass_rate = 0.0;     // every question correct
  double mean_reward = 0.0;   // fraction of questions correct
  std::vector<int> rewards;   // per prompt
  std::vector<int> questions; // per prompt
};

// Generates one image per sample caption (sampler seed = base seed + index)
// and scores it with the oracle against the sample's questions.
PromptEval prompt_following(const Model<float>& model, const std::vector<Sample>& prompts, SamplerConfig config,
                            const Vocabulary& vocab);

}  // namespace unidiff
