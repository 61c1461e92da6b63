// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/textgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unidiff/error.hpp"
#include "unidiff/layout.hpp"
#include "unidiff/schedule.hpp"

namespace unidiff {

void BlockConfig::validate() const {
  require(block_length >= 1, ErrorKind::kParameter, "block_length must be positive");
  require(steps_per_block >= 1, ErrorKind::kParameter, "steps_per_block must be positive");
  require(max_total_length >= block_length && max_total_length % block_length == 0, ErrorKind::kParameter,
          "max_total_length " + std::to_string(max_total_length) + " is not a positive multiple of block_length " +
              std::to_string(block_length));
}

bool detect_early_stop(std::span<const TokenId> decoded, std::size_t block_end, const Vocabulary& vocab) {
  const TokenId end = vocab.id(Special::kAnswerEnd);
  const std::size_t limit = std::min(block_end, decoded.size());
  return std::find(decoded.begin(), decoded.begin() + static_cast<std::ptrdiff_t>(limit), end) !=
         decoded.begin() + static_cast<std::ptrdiff_t>(limit);
}

TextResult generate_text(const Model<float>& model, std::span<const TokenId> prompt, const BlockConfig& config,
                         const Vocabulary& vocab) {
  config.validate();
  const std::size_t a0 = prompt.size();
  const std::size_t total = a0 + static_cast<std::size_t>(config.max_total_length);
  require(static_cast<int>(total) <= model.config().max_len, ErrorKind::kCapacity,
          "prompt plus answer needs " + std::to_string(total) + " positions, model supports " +
              std::to_string(model.config().max_len));
  const TokenId mask = vocab.mask();
  const TokenId answer_end = vocab.id(Special::kAnswerEnd);
  const IdRange text = vocab.text_subrange();
  const int kv = vocab.total_size();

  std::vector<TokenId> ids(prompt.begin(), prompt.end());
  ids.resize(total, mask);
  TextResult out;
  const int bl = config.block_length;

  for (int b = 0; b < config.blocks(); ++b) {
    const std::size_t lo = a0 + static_cast<std::size_t>(b) * bl;
    for (int step = 0; step < config.steps_per_block; ++step) {
      std::vector<std::size_t> masked;
      for (std::size_t p = lo; p < lo + bl; ++p) {
        if (ids[p] == mask) masked.push_back(p);
      }
      if (masked.empty()) {
        out.committed_per_step.push_back(0);
        continue;
      }
      if (config.record_inputs) out.inputs.push_back(ids);
      const auto logits = forward(model, std::span<const TokenId>(ids));
      ++out.forward_passes;

      std::vector<TokenId> pick(masked.size());
      std::vector<double> conf(masked.size());
      for (std::size_t i = 0; i < masked.size(); ++i) {
        const float* row = logits.data() + masked[i] * kv;
        require(std::isfinite(row[answer_end]), ErrorKind::kDivergence, "non-finite answer logit");
        // Candidates: the text range, then ANSWER_END.
        TokenId best = text.begin;
        float best_v = row[text.begin];
        for (TokenId t = text.begin + 1; t < text.end(); ++t) {
          require(std::isfinite(row[t]), ErrorKind::kDivergence, "non-finite answer logit");
          if (row[t] > best_v) best = t, best_v = row[t];
        }
        if (row[answer_end] > best_v) best = answer_end, best_v = row[answer_end];
        double sum = std::exp(static_cast<double>(row[answer_end]) - best_v);
        for (TokenId t = text.begin; t < text.end(); ++t) sum += std::exp(static_cast<double>(row[t]) - best_v);
        pick[i] = best;
        conf[i] = 1.0 / sum;
      }
      const long k = remask_count(step + 1, config.steps_per_block, static_cast<long>(masked.size()));
      std::vector<int> order(masked.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
        return conf[static_cast<std::size_t>(x)] < conf[static_cast<std::size_t>(y)];
      });
      std::vector<std::uint8_t> hide(masked.size(), 0);
      for (long i = 0; i < k; ++i) hide[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
      int committed = 0;
      for (std::size_t i = 0; i < masked.size(); ++i) {
        if (hide[i]) continue;
        ids[masked[i]] = pick[i];
        ++committed;
      }
      out.committed_per_step.push_back(committed);
    }
    out.blocks_decoded = b + 1;
    const std::span<const TokenId> decoded(ids.data() + a0, static_cast<std::size_t>(config.max_total_length));
    if (config.early_stop && detect_early_stop(decoded, static_cast<std::size_t>(b + 1) * bl, vocab)) {
      out.stopped_early = b + 1 < config.blocks();
      break;
    }
  }

  const std::size_t decoded_len = static_cast<std::size_t>(out.blocks_decoded) * bl;
  out.tokens.assign(ids.begin() + static_cast<std::ptrdiff_t>(a0),
                    ids.begin() + static_cast<std::ptrdiff_t>(a0 + decoded_len));
  const auto stop = std::find(out.tokens.begin(), out.tokens.end(), answer_end);
  if (stop != out.tokens.end()) out.tokens.erase(stop + 1, out.tokens.end());
  return out;
}

AnswerResult answer_question(const Model<float>& model, const GridImage& grid, const QAItem& qa,
                             const BlockConfig& config, const Corpus& corpus) {
  const TokenSequence prompt = mmu_prompt(grid, qa.question, corpus.vocab());
  AnswerResult out;
  out.text = generate_text(model, std::span<const TokenId>(prompt.ids), config, corpus.vocab());
  if (out.text.tokens.empty()) return out;
  const TokenId first = out.text.tokens.front();
  if (corpus.vocab().classify(first) != TokenClass::kText ||
      static_cast<std::size_t>(first) >= corpus.lexicon().size()) {
    return out;
  }
  out.word = corpus.lexicon().word(first);
  for (int i = 0; i < 4; ++i) {
    if (qa.choices[static_cast<std::size_t>(i)] == out.word) out.choice = i;
  }
  return out;
}

}  // namespace unidiff
