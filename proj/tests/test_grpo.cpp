// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "support.hpp"
#include "unidiff/grpo.hpp"

using namespace unidiff;
using unidiff::test::error_kind;

namespace {

struct Setup {
  Corpus corpus{Vocabulary(), {}};
  const Vocabulary& v = corpus.vocab();
  Model<float> model = test::sharpened(test::tiny_model(corpus.vocab(), 21), 2.0f);
  GrpoConfig config;

  Setup() {
    config.group = 2;
    config.sampler.steps = 4;
    config.sampler.height = 4;
    config.sampler.width = 4;
  }

  std::vector<RolloutGroup> groups(int n, std::uint64_t seed) const {
    std::vector<RolloutGroup> out;
    for (int i = 0; i < n; ++i) {
      const Sample s = corpus.generate_sample(seed + static_cast<std::uint64_t>(i));
      std::vector<QAItem> qs(s.qa.begin(), s.qa.begin() + 2);
      RolloutGroup g = rollout_group(model, s.caption, qs, config.group, config.sampler, seed + 100 + i, v);
      compute_rewards(g, RewardMode::kOracle, model, corpus, config.answer);
      std::vector<double> r;
      for (const auto& c : g.candidates) r.push_back(c.reward);
      g.weights = softmax_weights(r, config.alpha);
      out.push_back(std::move(g));
    }
    return out;
  }
};

}  // namespace

TEST_SUITE("grpo") {

TEST_CASE("softmax weights") {
  const std::vector<double> two{1, 0};
  const auto w = softmax_weights(two, 1.0);
  CHECK(w[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(w[1] == doctest::Approx(0.26894).epsilon(1e-5));
  CHECK(w[0] == doctest::Approx(1 / (1 + std::exp(-1.0))));

  for (double x : softmax_weights(std::vector<double>{3, 3, 3, 3}, 2.0)) CHECK(x == 0.25);

  Rng rng(3);
  std::uniform_int_distribution<int> reward(0, 8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(4);
    for (double& x : r) x = reward(rng);
    std::vector<double> shifted = r;
    for (double& x : shifted) x += 5;
    const auto a = softmax_weights(r, 1.0);
    const auto b = softmax_weights(shifted, 1.0);
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] > 0);
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
      sum += a[i];
      for (std::size_t j = 0; j < a.size(); ++j)
        if (r[i] > r[j]) CHECK(a[i] > a[j]);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(error_kind([] { softmax_weights(std::vector<double>{1}, 1.0); }) == ErrorKind::kParameter);
  CHECK(error_kind([] { softmax_weights(std::vector<double>{1, 2}, 0.0); }) == ErrorKind::kParameter);
}

TEST_CASE("config") {
  GrpoConfig c;
  CHECK(c.selected_steps() == std::vector<int>{1, 2, 3, 4});
  c.sampler.steps = 3;
  CHECK(c.selected_steps() == std::vector<int>{1});
  c.selected = {4};
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kParameter);
  c = GrpoConfig{};
  c.group = 1;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::kParameter);
  CHECK(parse_reward_mode("model") == RewardMode::kModel);
  CHECK(error_kind([] { parse_reward_mode("human"); }) == ErrorKind::kParameter);
}

TEST_CASE("rollout groups") {
  Setup s;
  s.config.group = 3;
  const Sample p = s.corpus.generate_sample(2);
  const RolloutGroup g = rollout_group(s.model, p.caption, p.qa, 3, s.config.sampler, 9, s.v);
  REQUIRE(g.candidates.size() == 3);
  for (const auto& c : g.candidates) {
    CHECK(c.trajectory.caption == p.caption);
    CHECK(replay(c.trajectory, s.v) == c.trajectory.grid);
  }
  CHECK((g.candidates[0].trajectory.grid != g.candidates[1].trajectory.grid ||
         g.candidates[1].trajectory.grid != g.candidates[2].trajectory.grid));
  const RolloutGroup again = rollout_group(s.model, p.caption, p.qa, 3, s.config.sampler, 9, s.v);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again.candidates[i].trajectory.grid == g.candidates[i].trajectory.grid);
}

TEST_CASE("oracle rewards") {
  Setup s;
  const Sample p = s.corpus.generate_sample(6);
  RolloutGroup g;
  g.caption = p.caption;
  g.questions = p.qa;
  g.candidates.resize(3);
  g.candidates[0].trajectory.grid = p.grid;
  g.candidates[1].trajectory.grid = GridImage(8, 8, s.v.image_token(p.scene.background));
  g.candidates[2].trajectory.grid = GridImage(8, 8, 5);  // a text id
  compute_rewards(g, RewardMode::kOracle, s.model, s.corpus, s.config.answer);
  CHECK(g.candidates[0].reward == static_cast<int>(p.qa.size()));
  int accidental = 0;
  for (const QAItem& q : p.qa) accidental += oracle_answer(g.candidates[1].trajectory.grid, q, s.v) == q.correct_index;
  CHECK(g.candidates[1].reward == accidental);
  CHECK(g.candidates[1].reward < static_cast<int>(p.qa.size()));
  CHECK(g.candidates[2].malformed);
  CHECK(g.candidates[2].reward == 0);
  for (std::size_t n = 0; n < p.qa.size(); ++n) {
    const QAItem& q = p.qa[n];
    CHECK(g.candidates[0].answers[n] == s.corpus.lexicon().id(q.choices[static_cast<std::size_t>(q.correct_index)]));
  }

  compute_rewards(g, RewardMode::kModel, s.model, s.corpus, s.config.answer);
  for (const auto& c : g.candidates) {
    CHECK(c.reward >= 0);
    CHECK(c.reward <= static_cast<int>(p.qa.size()));
  }
}

TEST_CASE("t2i log-likelihood") {
  Setup s;
  SamplerConfig sc = s.config.sampler;
  sc.temperature = 0.0;
  const Trajectory t = generate_image(s.model, s.corpus.generate_sample(1).caption, sc, s.v);
  const std::vector<int> all{1, 2, 3, 4};
  const float ll = t2i_loglik(s.model, t, std::span<const int>(all), s.v);
  CHECK(ll <= 0.0f);
  // the average of single-step terms times |T_sel| equals the sum
  float sum = 0;
  for (int step : all) {
    const std::vector<int> one{step};
    const float term = t2i_loglik(s.model, t, std::span<const int>(one), s.v);
    CHECK(term <= 0.0f);
    sum += term;
  }
  CHECK(ll == doctest::Approx(sum / 4).epsilon(1e-5));
  const std::vector<int> beyond{5};
  CHECK(error_kind([&] { t2i_loglik(s.model, t, std::span<const int>(beyond), s.v); }) == ErrorKind::kParameter);
  CHECK(error_kind([&] { t2i_loglik(s.model, t, std::span<const int>(), s.v); }) == ErrorKind::kParameter);
}

TEST_CASE("mmu log-likelihood closed forms") {
  Setup s;
  const Sample p = s.corpus.generate_sample(3);
  const std::vector<QAItem> qs(p.qa.begin(), p.qa.begin() + 2);
  const std::vector<TokenId> answers{4, 9};

  Model<double> flat = test::to_double(s.model);
  std::fill(flat.params().begin(), flat.params().end(), 0.0);
  const double effective = s.v.text_subrange().count + 1;  // text ids plus ANSWER_END
  CHECK(mmu_loglik(flat, p.grid, qs, answers, 8, s.v) == doctest::Approx(-std::log(effective)).epsilon(1e-12));

  Model<double> sure = test::to_double(s.model);
  const std::vector<TokenId> same{4, 4};
  sure.params()[sure.layout().b_out + 4] = 200.0;
  CHECK(mmu_loglik(sure, p.grid, qs, same, 8, s.v) == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<TokenId> skip{-1, 4};
  CHECK(mmu_loglik(flat, p.grid, qs, skip, 8, s.v) == doctest::Approx(-std::log(effective)).epsilon(1e-12));
  const std::vector<TokenId> none{-1, -1};
  CHECK(error_kind([&] { mmu_loglik(flat, p.grid, qs, none, 8, s.v); }) == ErrorKind::kParameter);
  const std::vector<TokenId> image{s.v.image_token(0), 4};
  CHECK(error_kind([&] { mmu_loglik(flat, p.grid, qs, image, 8, s.v); }) == ErrorKind::kClass);
}

TEST_CASE("gradients match finite differences") {
  Setup s;
  s.config.group = 2;
  const auto groups = s.groups(1, 30);
  Model<double> m = test::to_double(s.model);
  const Model<double> ref = test::to_double(test::sharpened(test::tiny_model(s.v, 22), 2.0f));
  const auto n = m.params().size();

  SUBCASE("t2i") {
    const auto& traj = groups[0].candidates[0].trajectory;
    const std::vector<int> sel{1, 2};
    std::vector<double> grad(n, 0.0);
    t2i_loglik(m, traj, std::span<const int>(sel), s.v, &grad);
    const auto r = test::check_gradient(m, grad, [&] { return t2i_loglik(m, traj, std::span<const int>(sel), s.v); },
                                        150, 1);
    INFO("worst ", r.worst, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("mmu") {
    const auto& cand = groups[0].candidates[0];
    std::vector<double> grad(n, 0.0);
    mmu_loglik(m, cand.trajectory.grid, groups[0].questions, cand.answers, 8, s.v, &grad);
    const auto r = test::check_gradient(
        m, grad, [&] { return mmu_loglik(m, cand.trajectory.grid, groups[0].questions, cand.answers, 8, s.v); }, 150,
        2);
    INFO("worst ", r.worst, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("full loss") {
    std::vector<double> grad(n, 0.0);
    grpo_loss(m, ref, groups, s.config, s.v, &grad);
    const auto r = test::check_gradient(m, grad, [&] { return grpo_loss(m, ref, groups, s.config, s.v).loss; }, 100, 3);
    INFO("worst ", r.worst, " analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("loss structure") {
  Setup s;
  s.config.group = 3;
  auto groups = s.groups(2, 50);
  for (auto& g : groups) g.weights.assign(3, 1.0 / 3);
  s.config.beta = 0.0;
  const auto parts = grpo_loss(s.model, s.model, groups, s.config, s.v);
  CHECK(parts.kl == doctest::Approx(0.0));
  const auto sel = s.config.selected_steps();
  double expected = 0;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) {
      double term = t2i_loglik(s.model, c.trajectory, std::span<const int>(sel), s.v);
      if (!c.malformed) term += mmu_loglik(s.model, c.trajectory.grid, g.questions, c.answers, 8, s.v);
      expected += term / 3;
    }
  }
  expected /= 2;
  CHECK(parts.loss == doctest::Approx(-expected).epsilon(1e-5));

  for (auto& g : groups) g.weights.clear();
  CHECK(error_kind([&] { grpo_loss(s.model, s.model, groups, s.config, s.v); }) == ErrorKind::kContract);
}

TEST_CASE("a large KL weight pulls toward the reference") {
  Setup s;
  const auto groups = s.groups(1, 70);
  const Model<float> reference = s.model;
  Model<float> moved = s.model;
  Rng rng(4);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (float& p : moved.params()) p += noise(rng);
  GrpoConfig cfg = s.config;
  cfg.beta = 1e4;
  cfg.adam.lr = 1e-4;
  const double before = grpo_loss(moved, reference, groups, cfg, s.v).kl;
  AdamState state;
  const GrpoDiagnostics d = grpo_step(moved, reference, groups, state, cfg, s.v);
  CHECK(d.kl == doctest::Approx(before));
  const double after = grpo_loss(moved, reference, groups, cfg, s.v).kl;
  CHECK(before > 0);
  CHECK(after < before);
  CHECK(d.weight_entropy > 0);
  CHECK(d.weight_entropy <= std::log(2.0) + 1e-12);
}

TEST_CASE("run_grpo") {
  Setup s;
  const auto prompts = s.corpus.generate(5, 4);
  Model<float> m = s.model;
  int calls = 0;
  const auto diags = run_grpo(m, prompts, s.config, {3, 1, 11}, s.corpus, [&](int, const GrpoDiagnostics&) { ++calls; });
  CHECK(diags.size() == 3);
  CHECK(calls == 3);
  CHECK(m.params() != s.model.params());
  Model<float> again = s.model;
  run_grpo(again, prompts, s.config, {3, 1, 11}, s.corpus);
  CHECK(again.params() == m.params());
}

TEST_CASE("wilcoxon signed rank") {
  std::vector<double> up(10);
  std::iota(up.begin(), up.end(), 1.0);
  CHECK(wilcoxon_signed_rank(up) == doctest::Approx(2.0 / 1024));
  CHECK(wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5}) == doctest::Approx(2.0 / 32));
  CHECK(wilcoxon_signed_rank(std::vector<double>{1, 1, -1}) == 1.0);
  CHECK(wilcoxon_signed_rank(std::vector<double>{0, 0}) == 1.0);
  // one negative of the smallest rank among 10: W- = 1, P(W- <= 1) = 2/1024 per tail
  std::vector<double> mixed = up;
  mixed[0] = -1;
  CHECK(wilcoxon_signed_rank(mixed) == doctest::Approx(4.0 / 1024));
  // zeros are dropped
  std::vector<double> with_zero = up;
  with_zero.push_back(0.0);
  CHECK(wilcoxon_signed_rank(with_zero) == wilcoxon_signed_rank(up));
}

}  // TEST_SUITE
