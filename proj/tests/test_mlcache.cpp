// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "unidiff/layout.hpp"
#include "unidiff/mlcache.hpp"
#include "unidiff/sampler.hpp"

using namespace unidiff;
using unidiff::test::error_kind;

namespace {

std::vector<int> compute_all_steps(int total, double warmup, int refresh) {
  CacheConfig c;
  c.cache_ratio = 0.5;
  c.warmup_ratio = warmup;
  c.refresh_interval = refresh;
  std::vector<int> out;
  for (int t = 0; t < total; ++t)
    if (step_policy(t, total, c) == StepPolicy::kComputeAll) out.push_back(t);
  return out;
}

std::vector<int> all_steps(int total) {
  std::vector<int> v(static_cast<std::size_t>(total));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_SUITE("mlcache") {

TEST_CASE("step policy") {
  CHECK(compute_all_steps(8, 0.25, 3) == std::vector<int>{0, 1, 2, 5});
  CHECK(compute_all_steps(10, 1.0, 4) == all_steps(10));
  CHECK(compute_all_steps(9, 0.3, 1) == all_steps(9));
  CHECK(compute_all_steps(9, 0.0, 1) == all_steps(9));
  // warmup rounds up: 0.3 * 10 = 3, 0.31 * 10 -> 4
  CHECK(warmup_steps(10, 0.3) == 3);
  CHECK(warmup_steps(10, 0.31) == 4);
  CHECK(compute_all_steps(6, 0.0, 2) == std::vector<int>{0, 2, 4});
  CacheConfig c;
  CHECK(error_kind([&] { step_policy(8, 8, c); }) == ErrorKind::kParameter);
  CHECK(error_kind([&] { step_policy(-1, 8, c); }) == ErrorKind::kParameter);
}

TEST_CASE("config validation") {
  CacheConfig c;
  c.cache_ratio = 1.0;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kParameter);
  c = CacheConfig{};
  c.warmup_ratio = 1.5;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kParameter);
  c = CacheConfig{};
  c.refresh_interval = 0;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kParameter);
  CHECK_FALSE(CacheConfig{}.enabled());
}

TEST_CASE("select_reused") {
  const std::vector<float> logits{0.9f, 0.1f, 0.5f, 0.7f};
  CHECK(select_reused(logits, 0.5) == std::vector<int>{0, 3});
  CHECK(select_reused(logits, 0.99).size() == 3);
  CHECK(select_reused(logits, 0.99) == std::vector<int>{0, 2, 3});
  CHECK(select_reused(logits, 0.0).empty());
  const std::vector<float> ties{1.0f, 2.0f, 2.0f, 2.0f, 1.0f};
  CHECK(select_reused(ties, 0.4) == std::vector<int>{1, 2});
  CHECK(select_reused(std::vector<float>{}, 0.5).empty());
}

TEST_CASE("cached_forward") {
  Corpus corpus(Vocabulary(), {});
  const Vocabulary& v = corpus.vocab();
  const auto model = test::tiny_model(v, 4);
  const auto caption = corpus.generate_sample(3).caption;
  std::vector<TokenId> cells(64, v.mask());
  auto ids = t2i_canvas(caption, 8, 8, cells, v);
  const std::size_t k = static_cast<std::size_t>(v.total_size());
  const std::size_t begin = t2i_image_begin(caption.size());

  KVCache<float> cache;
  cache.reset(static_cast<int>(ids.size()), model.config());
  const CachedForward first = cached_forward(model, ids, {}, cache, 0, v.mask());
  CHECK(first.logits == forward(model, std::span<const TokenId>(ids)));
  CHECK(first.computed_rows == static_cast<long>(ids.size()));
  CHECK(first.computed_masked == 64);

  // commit a few cells, then reuse every remaining masked position
  Rng rng(1);
  for (int cell : {0, 9, 30, 63}) ids[begin + cell_offset(8, cell / 8, cell % 8)] = v.image_token(cell % 16);
  std::vector<int> reuse;
  for (std::size_t p = 0; p < ids.size(); ++p)
    if (ids[p] == v.mask()) reuse.push_back(static_cast<int>(p));
  const CachedForward second = cached_forward(model, ids, reuse, cache, 1, v.mask());
  CHECK(second.computed_masked == 0);
  CHECK(second.computed_rows == static_cast<long>(ids.size() - reuse.size()));
  bool verbatim = true;
  for (int p : reuse) {
    const auto at = static_cast<std::size_t>(p) * k;
    verbatim = verbatim && std::equal(second.logits.begin() + at, second.logits.begin() + at + k, first.logits.begin() + at);
  }
  CHECK(verbatim);
  // committed positions were recomputed with the new ids
  const std::size_t c0 = (begin + cell_offset(8, 0, 0)) * k;
  CHECK_FALSE(std::equal(second.logits.begin() + c0, second.logits.begin() + c0 + k, first.logits.begin() + c0));

  KVCache<float> empty;
  empty.reset(static_cast<int>(ids.size()), model.config());
  std::vector<int> one{static_cast<int>(begin) + 1};
  CHECK(error_kind([&] { cached_forward(model, ids, one, empty, 0, v.mask()); }) == ErrorKind::kCacheCoherence);
  std::vector<int> outside{static_cast<int>(ids.size())};
  CHECK(error_kind([&] { cached_forward(model, ids, outside, cache, 2, v.mask()); }) == ErrorKind::kCacheCoherence);
}

TEST_CASE("exactness escapes") {
  Corpus corpus(Vocabulary(), {});
  const Vocabulary& v = corpus.vocab();
  const auto model = test::sharpened(test::tiny_model(v, 6), 3.0f);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto caption = corpus.generate_sample(seed).caption;
    SamplerConfig base;
    base.steps = 12;
    base.cfg_scale = 2.0;
    base.temperature = 1.0;
    base.seed = seed;
    const Trajectory plain = generate_image(model, caption, base, v);
    for (int which = 0; which < 3; ++which) {
      SamplerConfig cfg = base;
      cfg.cache = {0.6, 0.2, 3};
      if (which == 0) cfg.cache.cache_ratio = 0.0;
      if (which == 1) cfg.cache.warmup_ratio = 1.0;
      if (which == 2) cfg.cache.refresh_interval = 1;
      const Trajectory t = generate_image(model, caption, cfg, v);
      CHECK(t.grid == plain.grid);
      REQUIRE(t.steps.size() == plain.steps.size());
      for (std::size_t s = 0; s < t.steps.size(); ++s) {
        CHECK(t.steps[s].sampled == plain.steps[s].sampled);
        CHECK(t.steps[s].confidence == plain.steps[s].confidence);
        CHECK(t.steps[s].remasked == plain.steps[s].remasked);
        CHECK(t.steps[s].reused.empty());
      }
    }
  }
}

TEST_CASE("reuse accounting") {
  Corpus corpus(Vocabulary(), {});
  const Vocabulary& v = corpus.vocab();
  const auto model = test::sharpened(test::tiny_model(v, 6), 3.0f);
  SamplerConfig cfg;
  cfg.steps = 16;
  cfg.cfg_scale = 2.0;
  cfg.cache = {0.5, 0.25, 3};
  const Trajectory t = generate_image(model, corpus.generate_sample(1).caption, cfg, v);
  long expected = 0;
  int reuse_steps = 0;
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const StepRecord& rec = t.steps[s];
    const bool reuse = step_policy(static_cast<int>(s), cfg.steps, cfg.cache) == StepPolicy::kReuse;
    CHECK(rec.compute_all == !reuse);
    const std::size_t m = rec.masked.size();
    CHECK(rec.reused.size() == (reuse ? m / 2 : 0));
    // computed masked rows = ceil(m / 2) on reuse steps
    if (reuse) CHECK(m - rec.reused.size() == (m + 1) / 2);
    for (int cell : rec.reused) CHECK(std::binary_search(rec.masked.begin(), rec.masked.end(), cell));
    expected += static_cast<long>(m - rec.reused.size());
    reuse_steps += reuse && m > 0;
  }
  CHECK(reuse_steps > 0);
  CHECK(t.computed_masked == expected);
  CHECK(replay(t, v) == t.grid);
  for (int cell = 0; cell < 64; ++cell) CHECK(v.classify(t.grid.cells[static_cast<std::size_t>(cell)]) == TokenClass::kImage);
}

}  // TEST_SUITE
