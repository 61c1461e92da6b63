// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unidiff/mlcache.hpp"
#include "unidiff/model.hpp"
#include "unidiff/vocab.hpp"

namespace unidiff {

struct SamplerConfig {
  int steps = 64;
  double cfg_scale = 1.0;
  double temperature = 0.0;  // 0 selects argmax
  std::uint64_t seed = 0;
  int height = 8;
  int width = 8;
  CacheConfig cache;
  bool record_logits = false;

  void validate() const;
};

// One step of the predict / sample / schedule / remask loop. Cells are
// row-major grid indices; per-cell vectors are parallel to `masked`.
struct StepRecord {
  std::vector<int> masked;         // masked entering the step, ascending
  std::vector<TokenId> sampled;
  std::vector<float> confidence;
  std::vector<float> max_logit;    // guided, image-restricted
  std::vector<int> remasked;       // ascending
  std::vector<int> reused;         // served from the cache, ascending
  std::vector<float> logits;       // masked.size() x K' guided image logits, if recorded
  bool compute_all = true;
};

struct Trajectory {
  int height = 0;
  int width = 0;
  std::vector<TokenId> caption;
  std::vector<TokenId> initial;  // cells entering step 0, MASK where masked
  std::vector<StepRecord> steps;
  GridImage grid;
  double cfg_scale = 1.0;

  // Instrumentation.
  long forward_passes = 0;    // network invocations, both guidance branches
  long computed_masked = 0;   // masked rows run through the conditional branch
};

// Cells committed at step s: masked minus remasked, with their sampled ids.
std::vector<std::pair<int, TokenId>> committed_at(const StepRecord& step);

// Applies every step to `initial`; equals trajectory.grid for a well-formed
// trajectory.
GridImage replay(const Trajectory& trajectory, const Vocabulary& vocab);

// guided = uncond + s * (cond - uncond); s = 1 returns cond and s = 0 returns
// uncond exactly. Throws kContract on a shape mismatch.
std::vector<float> cfg_combine(std::span<const float> cond, std::span<const float> uncond, double scale);

struct RestrictedPrediction {
  std::vector<double> probs;  // over the K' image ids
  TokenId id = 0;             // argmax, lowest id on ties
  double confidence = 0.0;    // probs at the argmax
};

// Softmax over the image entries of a full logits row.
RestrictedPrediction restrict_to_image(std::span<const float> logits_row, const Vocabulary& vocab);

Trajectory generate_image(const Model<float>& model, std::span<const TokenId> caption, const SamplerConfig& config,
                          const Vocabulary& vocab);

// Regenerates `region` (cell indices) and leaves every other cell untouched.
Trajectory inpaint(const Model<float>& model, const GridImage& grid, std::span<const int> region,
                   std::span<const TokenId> caption, const SamplerConfig& config, const Vocabulary& vocab);

enum class Direction { kLeft, kRight, kUp, kDown };
Direction parse_direction(std::string_view word);

// Grows the canvas by `extent` rows or columns on one side and generates the
// new cells; original cells keep their values at translated coordinates.
Trajectory extrapolate(const Model<float>& model, const GridImage& grid, Direction direction, int extent,
                       std::span<const TokenId> caption, const SamplerConfig& config, const Vocabulary& vocab);

// Core loop over an arbitrary initial canvas. `cells` holds image ids or MASK.
Trajectory run_sampler(const Model<float>& model, std::span<const TokenId> caption, int height, int width,
                       std::vector<TokenId> cells, const SamplerConfig& config, const Vocabulary& vocab);

}  // namespace unidiff
