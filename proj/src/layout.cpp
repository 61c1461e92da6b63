// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/layout.hpp"

#include <string>

#include "unidiff/error.hpp"

namespace unidiff {
namespace {

void append_context(TokenSequence& seq, const TokenSequence& part) {
  for (std::size_t i = 0; i < part.size(); ++i) seq.push(part.ids[i], part.classes[i], false);
}

void append_canvas(std::vector<TokenId>& ids, int height, int width, std::span<const TokenId> cells,
                   const Vocabulary& vocab) {
  require(cells.size() == static_cast<std::size_t>(height) * width, ErrorKind::kContract, "canvas size mismatch");
  ids.push_back(vocab.id(Special::kImageBegin));
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) ids.push_back(cells[static_cast<std::size_t>(r) * width + c]);
    ids.push_back(vocab.id(Special::kEndOfLine));
  }
  ids.push_back(vocab.id(Special::kImageEnd));
}

}  // namespace

std::vector<TokenId> t2i_canvas(std::span<const TokenId> caption, int height, int width,
                                std::span<const TokenId> cells, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(t2i_image_begin(caption.size()) + serialized_length(height, width));
  ids.push_back(vocab.id(Special::kStartOfText));
  ids.insert(ids.end(), caption.begin(), caption.end());
  ids.push_back(vocab.id(Special::kEndOfText));
  append_canvas(ids, height, width, cells, vocab);
  return ids;
}

std::vector<TokenId> uncond_canvas(int height, int width, std::span<const TokenId> cells, const Vocabulary& vocab) {
  std::vector<TokenId> ids{vocab.id(Special::kStartOfText), vocab.id(Special::kUncondition),
                           vocab.id(Special::kEndOfText)};
  append_canvas(ids, height, width, cells, vocab);
  return ids;
}

TokenSequence t2i_sequence(std::span<const TokenId> caption, const GridImage& grid, const Vocabulary& vocab) {
  TokenSequence seq = wrap_pair(caption, grid, vocab);
  for (std::size_t i = 0; i < caption.size(); ++i) seq.maskable[i + 1] = 0;
  return seq;
}

TokenSequence uncond_sequence(const GridImage& grid, const Vocabulary& vocab) {
  TokenSequence seq;
  push_special(seq, vocab, Special::kStartOfText);
  push_special(seq, vocab, Special::kUncondition);
  push_special(seq, vocab, Special::kEndOfText);
  seq.append(serialize_grid(grid, vocab));
  return seq;
}

TokenSequence mmu_prompt(const GridImage& grid, const TokenSequence& question, const Vocabulary& vocab) {
  TokenSequence seq;
  push_special(seq, vocab, Special::kSystemBegin);
  push_special(seq, vocab, Special::kSystemEnd);
  append_context(seq, serialize_grid(grid, vocab));
  append_context(seq, question);
  push_special(seq, vocab, Special::kAnswerBegin);
  return seq;
}

TokenSequence mmu_sequence(const GridImage& grid, const TokenSequence& question, std::span<const TokenId> answer,
                           int answer_length, const Vocabulary& vocab) {
  require(static_cast<int>(answer.size()) < answer_length, ErrorKind::kParameter,
          "answer of " + std::to_string(answer.size()) + " tokens does not fit " + std::to_string(answer_length) +
              " slots");
  TokenSequence seq = mmu_prompt(grid, question, vocab);
  const TokenId end = vocab.id(Special::kAnswerEnd);
  for (TokenId id : answer) {
    require(vocab.valid(id) && vocab.classify(id) == TokenClass::kText, ErrorKind::kClass,
            "answer contains non-text token " + std::to_string(id));
    seq.push(id, TokenClass::kText, true);
  }
  for (int i = static_cast<int>(answer.size()); i < answer_length; ++i) seq.push(end, TokenClass::kSpecial, true);
  return seq;
}

}  // namespace unidiff
