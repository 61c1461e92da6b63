// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "unidiff/error.hpp"
#include "unidiff/layout.hpp"

namespace unidiff {

void MixtureConfig::validate() const {
  require(t2i >= 0 && joint >= 0 && qa >= 0 && t2i + joint + qa > 0, ErrorKind::kParameter,
          "mixture weights must be non-negative with a positive sum");
  require(uncond_dropout >= 0 && uncond_dropout <= 1, ErrorKind::kParameter, "uncond_dropout must lie in [0, 1]");
  require(answer_length >= 2, ErrorKind::kParameter, "answer_length must be at least 2");
}

TokenSequence qa_example(const Sample& sample, const QAItem& qa, const Corpus& corpus, int answer_length) {
  const TokenId answer = corpus.lexicon().id(qa.choices[static_cast<std::size_t>(qa.correct_index)]);
  return mmu_sequence(sample.grid, qa.question, std::span<const TokenId>(&answer, 1), answer_length, corpus.vocab());
}

TokenSequence training_example(const Sample& sample, const Corpus& corpus, const MixtureConfig& mix, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double total = mix.t2i + mix.joint + mix.qa;
  const double u = unit(rng) * total;
  if (u < mix.t2i || (u >= mix.t2i + mix.joint && sample.qa.empty())) {
    if (unit(rng) < mix.uncond_dropout) return uncond_sequence(sample.grid, corpus.vocab());
    return t2i_sequence(sample.caption, sample.grid, corpus.vocab());
  }
  if (u < mix.t2i + mix.joint) return wrap_pair(sample.caption, sample.grid, corpus.vocab());
  std::uniform_int_distribution<std::size_t> pick(0, sample.qa.size() - 1);
  return qa_example(sample, sample.qa[pick(rng)], corpus, mix.answer_length);
}

double heldout_masked_accuracy(const Model<float>& model, const std::vector<Sample>& samples,
                               const Vocabulary& vocab, std::uint64_t seed) {
  require(!samples.empty(), ErrorKind::kParameter, "held-out set is empty");
  const int kv = vocab.total_size();
  long correct = 0, total = 0;
  SeedSplitter split(seed);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    Rng rng = split.rng("heldout", s);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const TokenSequence seq = t2i_sequence(samples[s].caption, samples[s].grid, vocab);
    MaskSet mask;
    while (mask.empty()) mask = sample_training_mask(rng, seq, 1.0 - unit(rng));
    const auto input = apply_mask(seq, mask, vocab);
    const auto logits = forward(model, std::span<const TokenId>(input));
    for (int pos : mask.indices) {
      const float* row = logits.data() + static_cast<std::size_t>(pos) * kv;
      const auto best = static_cast<TokenId>(std::max_element(row, row + kv) - row);
      correct += best == seq.ids[static_cast<std::size_t>(pos)];
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double learning_rate(const TrainConfig& config, long step) {
  const double base = config.adam.lr;
  if (config.warmup_steps > 0 && step <= config.warmup_steps)
    return base * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  const long span = config.steps - config.warmup_steps;
  if (span <= 0 || config.min_lr_ratio >= 1.0) return base;
  const double p = std::clamp(static_cast<double>(step - config.warmup_steps) / static_cast<double>(span), 0.0, 1.0);
  const double floor = base * config.min_lr_ratio;
  return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * p));
}

std::vector<TrainRecord> train(Model<float>& model, const std::vector<Sample>& train_set,
                               const std::vector<Sample>& heldout, const Corpus& corpus, const TrainConfig& config,
                               const TrainCallback& on_record) {
  require(!train_set.empty(), ErrorKind::kParameter, "training set is empty");
  require(config.batch >= 1 && config.steps >= 0, ErrorKind::kParameter, "batch must be positive, steps >= 0");
  config.mix.validate();
  SeedSplitter split(config.seed);
  Rng order_rng = split.rng("order");
  Rng example_rng = split.rng("examples");
  Rng mask_rng = split.rng("masks");
  AdamState state;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<TrainRecord> records;
  const auto start = std::chrono::steady_clock::now();
  double loss_sum = 0.0;
  long loss_count = 0;
  std::vector<TokenSequence> batch;

  auto emit = [&](long step) {
    TrainRecord rec;
    rec.step = step;
    rec.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (!heldout.empty()) rec.accuracy = heldout_masked_accuracy(model, heldout, corpus.vocab(), split.seed("eval"));
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    records.push_back(rec);
    if (on_record) on_record(rec);
    loss_sum = 0.0;
    loss_count = 0;
  };

  for (long step = 1; step <= config.steps; ++step) {
    batch.clear();
    for (int b = 0; b < config.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(training_example(train_set[order[cursor++]], corpus, config.mix, example_rng));
    }
    AdamConfig adam = config.adam;
    adam.lr = learning_rate(config, step);
    const TrainStepResult r = train_step(model, batch, state, adam, corpus.vocab(), mask_rng);
    loss_sum += r.loss;
    ++loss_count;
    if (config.eval_every > 0 && step % config.eval_every == 0 && step != config.steps) emit(step);
  }
  emit(config.steps);
  return records;
}

}  // namespace unidiff
