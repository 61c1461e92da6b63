// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "unidiff/vocab.hpp"

namespace unidiff {

// Sequence layouts shared by training, sampling and answering.
//
//   generation     <sot> caption <eot> <image> ... </image>
//   unconditional  <sot> <uncondition> <eot> <image> ... </image>
//   understanding  <system></system> <image> ... </image> <user> ... </user>
//                  <answer> a_1 .. a_n </answer> ... </answer>
//
// Generation layouts expose only image cells as maskable; the caption is
// context. Understanding layouts expose only the answer region.

TokenSequence t2i_sequence(std::span<const TokenId> caption, const GridImage& grid, const Vocabulary& vocab);
TokenSequence uncond_sequence(const GridImage& grid, const Vocabulary& vocab);

// Sequence index of IMAGE_BEGIN for a caption of the given length.
inline std::size_t t2i_image_begin(std::size_t caption_length) { return caption_length + 2; }
inline std::size_t uncond_image_begin() { return 3; }

// Everything up to and including ANSWER_BEGIN; nothing maskable.
TokenSequence mmu_prompt(const GridImage& grid, const TokenSequence& question, const Vocabulary& vocab);

// Token ids of a generation layout whose canvas may hold MASK cells.
std::vector<TokenId> t2i_canvas(std::span<const TokenId> caption, int height, int width,
                                std::span<const TokenId> cells, const Vocabulary& vocab);
std::vector<TokenId> uncond_canvas(int height, int width, std::span<const TokenId> cells, const Vocabulary& vocab);

// The answer region has answer_length slots: the answer tokens followed by
// ANSWER_END padding. Needs answer.size() < answer_length.
TokenSequence mmu_sequence(const GridImage& grid, const TokenSequence& question, std::span<const TokenId> answer,
                           int answer_length, const Vocabulary& vocab);

// Sequence index of the first answer slot.
inline std::size_t mmu_answer_begin(int height, int width, std::size_t question_length) {
  return 2 + serialized_length(height, width) + question_length + 1;
}

}  // namespace unidiff
