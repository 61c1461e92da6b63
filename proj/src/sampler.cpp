// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "unidiff/error.hpp"
#include "unidiff/layout.hpp"
#include "unidiff/schedule.hpp"

namespace unidiff {
namespace {

int cell_position(std::size_t image_begin, int width, int cell) {
  return static_cast<int>(image_begin + cell_offset(width, cell / width, cell % width));
}

}  // namespace

void SamplerConfig::validate() const {
  require(steps >= 1, ErrorKind::kParameter, "steps must be at least 1, got " + std::to_string(steps));
  require(cfg_scale >= 0.0 && std::isfinite(cfg_scale), ErrorKind::kParameter,
          "cfg scale must be finite and non-negative");
  require(temperature >= 0.0 && std::isfinite(temperature), ErrorKind::kParameter,
          "temperature must be finite and non-negative");
  require(height >= 1 && width >= 1, ErrorKind::kParameter, "grid size must be positive");
  cache.validate();
}

std::vector<std::pair<int, TokenId>> committed_at(const StepRecord& step) {
  std::vector<std::pair<int, TokenId>> out;
  std::size_t r = 0;
  for (std::size_t i = 0; i < step.masked.size(); ++i) {
    if (r < step.remasked.size() && step.remasked[r] == step.masked[i]) {
      ++r;
      continue;
    }
    out.emplace_back(step.masked[i], step.sampled[i]);
  }
  return out;
}

GridImage replay(const Trajectory& trajectory, const Vocabulary& vocab) {
  std::vector<TokenId> cells = trajectory.initial;
  for (const StepRecord& step : trajectory.steps) {
    for (auto [cell, id] : committed_at(step)) cells[static_cast<std::size_t>(cell)] = id;
  }
  GridImage grid;
  grid.height = trajectory.height;
  grid.width = trajectory.width;
  grid.cells = std::move(cells);
  validate_grid(grid, vocab);
  return grid;
}

std::vector<float> cfg_combine(std::span<const float> cond, std::span<const float> uncond, double scale) {
  require(cond.size() == uncond.size(), ErrorKind::kContract,
          "guidance shapes differ: " + std::to_string(cond.size()) + " vs " + std::to_string(uncond.size()));
  if (scale == 1.0) return {cond.begin(), cond.end()};
  if (scale == 0.0) return {uncond.begin(), uncond.end()};
  const float s = static_cast<float>(scale);
  std::vector<float> out(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = uncond[i] + s * (cond[i] - uncond[i]);
  return out;
}

RestrictedPrediction restrict_to_image(std::span<const float> logits_row, const Vocabulary& vocab) {
  require(static_cast<int>(logits_row.size()) == vocab.total_size(), ErrorKind::kContract,
          "logits row has " + std::to_string(logits_row.size()) + " entries, vocabulary has " +
              std::to_string(vocab.total_size()));
  const IdRange img = vocab.image_subrange();
  const float* row = logits_row.data() + img.begin;
  RestrictedPrediction out;
  int best = 0;
  for (int j = 1; j < img.count; ++j) {
    if (row[j] > row[best]) best = j;
  }
  out.probs.resize(static_cast<std::size_t>(img.count));
  double sum = 0.0;
  for (int j = 0; j < img.count; ++j) {
    out.probs[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(row[j]) - row[best]);
    sum += out.probs[static_cast<std::size_t>(j)];
  }
  for (double& p : out.probs) p /= sum;
  out.id = img.begin + best;
  out.confidence = out.probs[static_cast<std::size_t>(best)];
  return out;
}

Trajectory run_sampler(const Model<float>& model, std::span<const TokenId> caption, int height, int width,
                       std::vector<TokenId> cells, const SamplerConfig& config, const Vocabulary& vocab) {
  config.validate();
  require(model.config().vocab_size == vocab.total_size(), ErrorKind::kContract,
          "model and vocabulary sizes differ");
  require(height >= 1 && width >= 1, ErrorKind::kParameter, "grid size must be positive");
  const int n_cells = height * width;
  require(static_cast<int>(cells.size()) == n_cells, ErrorKind::kContract, "canvas size mismatch");
  const TokenId mask = vocab.mask();
  for (TokenId id : cells) {
    require(id == mask || (vocab.valid(id) && vocab.classify(id) == TokenClass::kImage), ErrorKind::kInvalidGrid,
            "canvas cell " + std::to_string(id) + " is neither an image token nor MASK");
  }
  for (TokenId id : caption) {
    require(vocab.valid(id) && vocab.classify(id) == TokenClass::kText, ErrorKind::kClass,
            "prompt contains non-text token " + std::to_string(id));
  }

  const std::size_t cond_begin = t2i_image_begin(caption.size());
  const std::size_t uncond_begin = uncond_image_begin();
  const std::size_t length = cond_begin + serialized_length(height, width);
  require(static_cast<int>(length) <= model.config().max_len, ErrorKind::kCapacity,
          "a " + std::to_string(height) + "x" + std::to_string(width) + " canvas with this prompt needs " +
              std::to_string(length) + " positions, exceeding model capacity " + std::to_string(model.config().max_len));

  const bool guided = config.cfg_scale != 1.0;
  const bool use_cache = config.cache.enabled();
  const float scale = static_cast<float>(config.cfg_scale);
  const IdRange img = vocab.image_subrange();
  const int kv = vocab.total_size();

  std::vector<TokenId> cond_ids = t2i_canvas(caption, height, width, cells, vocab);
  std::vector<TokenId> uncond_ids = uncond_canvas(height, width, cells, vocab);
  KVCache<float> cond_cache, uncond_cache;
  if (use_cache) {
    cond_cache.reset(static_cast<int>(cond_ids.size()), model.config());
    if (guided) uncond_cache.reset(static_cast<int>(uncond_ids.size()), model.config());
  }

  Trajectory traj;
  traj.height = height;
  traj.width = width;
  traj.caption.assign(caption.begin(), caption.end());
  traj.initial = cells;
  traj.cfg_scale = config.cfg_scale;
  Rng rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<float> last_max(static_cast<std::size_t>(n_cells), -std::numeric_limits<float>::infinity());
  std::vector<float> g(static_cast<std::size_t>(img.count));

  for (int step = 0; step < config.steps; ++step) {
    StepRecord rec;
    for (int i = 0; i < n_cells; ++i) {
      if (cells[static_cast<std::size_t>(i)] == mask) rec.masked.push_back(i);
    }
    if (rec.masked.empty()) {
      traj.steps.push_back(std::move(rec));
      continue;
    }
    const std::size_t m = rec.masked.size();

    std::vector<float> cond_logits, uncond_logits;
    if (use_cache) {
      rec.compute_all = step_policy(step, config.steps, config.cache) == StepPolicy::kComputeAll;
      if (!rec.compute_all) {
        std::vector<float> prev(m);
        for (std::size_t i = 0; i < m; ++i) prev[i] = last_max[static_cast<std::size_t>(rec.masked[i])];
        for (int idx : select_reused(prev, config.cache.cache_ratio)) {
          rec.reused.push_back(rec.masked[static_cast<std::size_t>(idx)]);
        }
      }
      std::vector<int> cond_reuse, uncond_reuse;
      for (int cell : rec.reused) {
        cond_reuse.push_back(cell_position(cond_begin, width, cell));
        uncond_reuse.push_back(cell_position(uncond_begin, width, cell));
      }
      CachedForward cf = cached_forward(model, cond_ids, cond_reuse, cond_cache, step, mask);
      traj.computed_masked += cf.computed_masked;
      cond_logits = std::move(cf.logits);
      if (guided) uncond_logits = cached_forward(model, uncond_ids, uncond_reuse, uncond_cache, step, mask).logits;
    } else {
      cond_logits = forward(model, std::span<const TokenId>(cond_ids));
      traj.computed_masked += static_cast<long>(m);
      if (guided) uncond_logits = forward(model, std::span<const TokenId>(uncond_ids));
    }
    traj.forward_passes += guided ? 2 : 1;

    rec.sampled.resize(m);
    rec.confidence.resize(m);
    rec.max_logit.resize(m);
    if (config.record_logits) rec.logits.resize(m * static_cast<std::size_t>(img.count));
    std::vector<double> conf(m);
    for (std::size_t i = 0; i < m; ++i) {
      const int cell = rec.masked[i];
      const float* c_row =
          cond_logits.data() + static_cast<std::size_t>(cell_position(cond_begin, width, cell)) * kv + img.begin;
      if (guided) {
        const float* u_row =
            uncond_logits.data() + static_cast<std::size_t>(cell_position(uncond_begin, width, cell)) * kv + img.begin;
        if (scale == 0.0f) {
          std::copy_n(u_row, img.count, g.begin());
        } else {
          for (int j = 0; j < img.count; ++j) g[static_cast<std::size_t>(j)] = u_row[j] + scale * (c_row[j] - u_row[j]);
        }
      } else {
        std::copy_n(c_row, img.count, g.begin());
      }
      int best = 0;
      for (int j = 0; j < img.count; ++j) {
        require(std::isfinite(g[static_cast<std::size_t>(j)]), ErrorKind::kDivergence,
                "non-finite guided logit at step " + std::to_string(step));
        if (g[static_cast<std::size_t>(j)] > g[static_cast<std::size_t>(best)]) best = j;
      }
      double sum = 0.0;
      std::vector<double> p(static_cast<std::size_t>(img.count));
      for (int j = 0; j < img.count; ++j) {
        p[static_cast<std::size_t>(j)] =
            std::exp(static_cast<double>(g[static_cast<std::size_t>(j)]) - g[static_cast<std::size_t>(best)]);
        sum += p[static_cast<std::size_t>(j)];
      }
      int pick = best;
      if (config.temperature > 0.0) {
        std::vector<double> w(static_cast<std::size_t>(img.count));
        double wsum = 0.0;
        for (int j = 0; j < img.count; ++j) {
          w[static_cast<std::size_t>(j)] = std::exp(
              (static_cast<double>(g[static_cast<std::size_t>(j)]) - g[static_cast<std::size_t>(best)]) /
              config.temperature);
          wsum += w[static_cast<std::size_t>(j)];
        }
        double u = unif(rng) * wsum;
        pick = img.count - 1;
        for (int j = 0; j < img.count; ++j) {
          u -= w[static_cast<std::size_t>(j)];
          if (u < 0.0) {
            pick = j;
            break;
          }
        }
      }
      rec.sampled[i] = img.begin + pick;
      conf[i] = p[static_cast<std::size_t>(pick)] / sum;
      rec.confidence[i] = static_cast<float>(conf[i]);
      rec.max_logit[i] = g[static_cast<std::size_t>(best)];
      last_max[static_cast<std::size_t>(cell)] = g[static_cast<std::size_t>(best)];
      if (config.record_logits) std::copy(g.begin(), g.end(), rec.logits.begin() + i * img.count);
    }

    const long k = remask_count(step + 1, config.steps, static_cast<long>(m));
    std::vector<int> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return conf[static_cast<std::size_t>(a)] < conf[static_cast<std::size_t>(b)];
    });
    std::vector<std::uint8_t> hide(m, 0);
    for (long i = 0; i < k; ++i) hide[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    for (std::size_t i = 0; i < m; ++i) {
      const int cell = rec.masked[i];
      if (hide[i]) {
        rec.remasked.push_back(cell);
        continue;
      }
      cells[static_cast<std::size_t>(cell)] = rec.sampled[i];
      cond_ids[static_cast<std::size_t>(cell_position(cond_begin, width, cell))] = rec.sampled[i];
      uncond_ids[static_cast<std::size_t>(cell_position(uncond_begin, width, cell))] = rec.sampled[i];
    }
    traj.steps.push_back(std::move(rec));
  }

  traj.grid.height = height;
  traj.grid.width = width;
  traj.grid.cells = std::move(cells);
  validate_grid(traj.grid, vocab);
  return traj;
}

Trajectory generate_image(const Model<float>& model, std::span<const TokenId> caption, const SamplerConfig& config,
                          const Vocabulary& vocab) {
  config.validate();
  std::vector<TokenId> cells(static_cast<std::size_t>(config.height) * config.width, vocab.mask());
  return run_sampler(model, caption, config.height, config.width, std::move(cells), config, vocab);
}

Trajectory inpaint(const Model<float>& model, const GridImage& grid, std::span<const int> region,
                   std::span<const TokenId> caption, const SamplerConfig& config, const Vocabulary& vocab) {
  validate_grid(grid, vocab);
  require(!region.empty(), ErrorKind::kParameter, "inpainting region is empty");
  std::vector<TokenId> cells = grid.cells;
  for (int cell : region) {
    require(cell >= 0 && cell < static_cast<int>(grid.size()), ErrorKind::kParameter,
            "region cell " + std::to_string(cell) + " outside a " + std::to_string(grid.height) + "x" +
                std::to_string(grid.width) + " grid");
    cells[static_cast<std::size_t>(cell)] = vocab.mask();
  }
  return run_sampler(model, caption, grid.height, grid.width, std::move(cells), config, vocab);
}

Direction parse_direction(std::string_view word) {
  if (word == "left") return Direction::kLeft;
  if (word == "right") return Direction::kRight;
  if (word == "up") return Direction::kUp;
  if (word == "down") return Direction::kDown;
  fail(ErrorKind::kParameter, "unknown direction '" + std::string(word) + "'");
}

Trajectory extrapolate(const Model<float>& model, const GridImage& grid, Direction direction, int extent,
                       std::span<const TokenId> caption, const SamplerConfig& config, const Vocabulary& vocab) {
  validate_grid(grid, vocab);
  require(extent >= 0, ErrorKind::kParameter, "extent must be non-negative, got " + std::to_string(extent));
  const bool horizontal = direction == Direction::kLeft || direction == Direction::kRight;
  const int h = grid.height + (horizontal ? 0 : extent);
  const int w = grid.width + (horizontal ? extent : 0);
  const int r0 = direction == Direction::kUp ? extent : 0;
  const int c0 = direction == Direction::kLeft ? extent : 0;
  std::vector<TokenId> cells(static_cast<std::size_t>(h) * w, vocab.mask());
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) cells[static_cast<std::size_t>(r + r0) * w + (c + c0)] = grid.at(r, c);
  }
  return run_sampler(model, caption, h, w, std::move(cells), config, vocab);
}

}  // namespace unidiff
