// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "support.hpp"
#include "unidiff/fidelity.hpp"

using namespace unidiff;
using unidiff::test::error_kind;

namespace {

// Pearson correlation of ranks, ranks counted pairwise.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double below = 0, equal = 0;
      for (double w : v) {
        below += w < v[i];
        equal += w == v[i];
      }
      r[i] = below + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_SUITE("fidelity") {

TEST_CASE("cosine similarity") {
  const std::vector<float> a{1, 0, 0}, b{0, 2, 0}, c{3, 0, 0}, d{-1, 0, 0}, z{0, 0, 0};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, d) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(a, z) == 0.0);
  CHECK(error_kind([&] { cosine_similarity(a, std::vector<float>{1}); }) == ErrorKind::kContract);
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman(x, std::vector<double>{10, 20, 30, 40, 50}) == doctest::Approx(1.0));
  CHECK(spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman(x, std::vector<double>{7, 7, 7, 7, 7}) == 0.0);
  Rng rng(5);
  std::uniform_int_distribution<int> small(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(30), b(30);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = small(rng);
      b[i] = small(rng) + 0.5 * a[i];
    }
    CHECK(spearman(a, b) == doctest::Approx(spearman_oracle(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("report on toy trajectories") {
  Corpus corpus(Vocabulary(), {});
  const Vocabulary& v = corpus.vocab();
  const auto model = test::sharpened(test::tiny_model(v, 8), 3.0f);
  const auto caption = corpus.generate_sample(4).caption;
  SamplerConfig cfg;
  cfg.steps = 16;
  cfg.cfg_scale = 2.0;
  cfg.record_logits = true;
  const Trajectory base = generate_image(model, caption, cfg, v);

  SUBCASE("cache disabled on both runs") {
    const FidelityReport r = fidelity_report(base, generate_image(model, caption, cfg, v));
    CHECK(r.final_agreement == 1.0);
    CHECK(r.savings_fraction == 0.0);
    CHECK(r.reused_total == 0);
    CHECK(r.accounting_holds);
    for (double s : r.per_step_similarity) CHECK(std::isnan(s));
  }
  SUBCASE("cached run") {
    SamplerConfig cached = cfg;
    cached.cache = {0.5, 0.25, 4};
    const Trajectory t = generate_image(model, caption, cached, v);
    const FidelityReport r = fidelity_report(base, t);
    CHECK(r.accounting_holds);
    CHECK(r.computed_masked == r.masked_total - r.reused_total);
    CHECK(r.reused_total > 0);
    CHECK(r.savings_fraction == doctest::Approx(static_cast<double>(r.reused_total) / r.masked_total));
    CHECK(r.savings_fraction < 0.5);
    CHECK(r.final_agreement >= 0.0);
    CHECK(r.final_agreement <= 1.0);
    CHECK(r.per_step_similarity.size() == 16);
    CHECK_FALSE(r.scatter.empty());
    std::vector<double> xs, ys;
    for (auto [x, y] : r.scatter) xs.push_back(x), ys.push_back(y);
    CHECK(r.spearman == doctest::Approx(spearman_oracle(xs, ys)).epsilon(1e-9));
  }
  SUBCASE("contract errors") {
    SamplerConfig other = cfg;
    other.steps = 8;
    const Trajectory shorter = generate_image(model, caption, other, v);
    CHECK(error_kind([&] { fidelity_report(base, shorter); }) == ErrorKind::kContract);
    SamplerConfig plain = cfg;
    plain.record_logits = false;
    const Trajectory bare = generate_image(model, caption, plain, v);
    CHECK(error_kind([&] { fidelity_report(bare, base); }) == ErrorKind::kContract);
  }
}

}  // TEST_SUITE
