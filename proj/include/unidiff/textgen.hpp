// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unidiff/corpus.hpp"
#include "unidiff/model.hpp"

namespace unidiff {

// Block-wise answer decoding: blocks left to right, parallel prediction
// with the cosine remask rule inside each block.
struct BlockConfig {
  int block_length = 256;
  int steps_per_block = 32;
  int max_total_length = 1024;
  bool early_stop = true;
  bool record_inputs = false;  // keep every forward input (for inspection)

  int blocks() const { return max_total_length / block_length; }
  void validate() const;
};

struct TextResult {
  std::vector<TokenId> tokens;  // decoded answer, cut one past ANSWER_END
  int blocks_decoded = 0;
  bool stopped_early = false;
  long forward_passes = 0;
  std::vector<int> committed_per_step;
  std::vector<std::vector<TokenId>> inputs;  // with record_inputs
};

// `prompt` ends with ANSWER_BEGIN. Answer slots start fully masked and are
// decoded over text ids plus ANSWER_END only.
TextResult generate_text(const Model<float>& model, std::span<const TokenId> prompt, const BlockConfig& config,
                         const Vocabulary& vocab);

// True iff ANSWER_END occurs among decoded[0, block_end).
bool detect_early_stop(std::span<const TokenId> decoded, std::size_t block_end, const Vocabulary& vocab);

// Answers a QA item about `grid`; returns the choice index named by the
// first decoded token, or -1 when it names none of the choices.
struct AnswerResult {
  int choice = -1;
  std::string word;
  TextResult text;
};
AnswerResult answer_question(const Model<float>& model, const GridImage& grid, const QAItem& qa,
                             const BlockConfig& config, const Corpus& corpus);

}  // namespace unidiff
