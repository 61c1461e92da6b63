// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "unidiff/corpus.hpp"
#include "unidiff/model.hpp"

namespace unidiff {

// Share of each example kind in a training batch.
//   t2i    caption given, image masked; caption dropped to UNCONDITION with
//          probability uncond_dropout
//   joint  caption and image both maskable
//   qa     grid and question given, answer region masked
struct MixtureConfig {
  double t2i = 0.7;
  double joint = 0.1;
  double qa = 0.2;
  double uncond_dropout = 0.1;
  int answer_length = 8;

  void validate() const;
};

struct TrainConfig {
  long steps = 1000;
  int batch = 16;
  AdamConfig adam;
  MixtureConfig mix;
  std::uint64_t seed = 0;
  long eval_every = 0;  // 0 disables periodic held-out evaluation
  long warmup_steps = 0;
  double min_lr_ratio = 1.0;  // 1 keeps the rate constant after warmup
};

// Linear warmup then cosine decay from adam.lr to adam.lr * min_lr_ratio.
double learning_rate(const TrainConfig& config, long step);

TokenSequence training_example(const Sample& sample, const Corpus& corpus, const MixtureConfig& mix, Rng& rng);

// Understanding sequence for a QA item with the correct choice as answer.
TokenSequence qa_example(const Sample& sample, const QAItem& qa, const Corpus& corpus, int answer_length);

// Fraction of masked image tokens whose full-vocabulary argmax equals the
// target, on generation layouts with per-sample ratios m ~ Uniform(0, 1].
// Deterministic in seed.
double heldout_masked_accuracy(const Model<float>& model, const std::vector<Sample>& samples,
                               const Vocabulary& vocab, std::uint64_t seed);

struct TrainRecord {
  long step = 0;
  double loss = 0.0;       // mean over the steps since the previous record
  double accuracy = -1.0;  // held-out, when evaluated
  double seconds = 0.0;
};

using TrainCallback = std::function<void(const TrainRecord&)>;

// Epoch-shuffled minibatch training. Records are emitted every eval_every
// steps and once at the end.
std::vector<TrainRecord> train(Model<float>& model, const std::vector<Sample>& train_set,
                               const std::vector<Sample>& heldout, const Corpus& corpus, const TrainConfig& config,
                               const TrainCallback& on_record = {});

}  // namespace unidiff
