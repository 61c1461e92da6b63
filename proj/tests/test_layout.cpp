// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"
#include "unidiff/layout.hpp"

using namespace unidiff;
using unidiff::test::error_kind;

TEST_SUITE("layout") {

TEST_CASE("generation layout exposes only image cells") {
  Corpus corpus(Vocabulary(), {});
  const Vocabulary& v = corpus.vocab();
  const Sample s = corpus.generate_sample(1);
  const TokenSequence seq = t2i_sequence(s.caption, s.grid, v);
  CHECK(seq.size() == s.caption.size() + 2 + serialized_length(8, 8));
  CHECK(seq.ids[t2i_image_begin(s.caption.size())] == v.id(Special::kImageBegin));
  CHECK(seq.maskable_count() == 64);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK((seq.maskable[i] == 1) == (seq.classes[i] == TokenClass::kImage));
  }
  const auto canvas = t2i_canvas(s.caption, 8, 8, s.grid.cells, v);
  CHECK(canvas == seq.ids);
}

TEST_CASE("unconditional layout") {
  Vocabulary v;
  GridImage g(2, 2, v.image_token(3));
  const TokenSequence seq = uncond_sequence(g, v);
  CHECK(seq.ids[0] == v.id(Special::kStartOfText));
  CHECK(seq.ids[1] == v.id(Special::kUncondition));
  CHECK(seq.ids[2] == v.id(Special::kEndOfText));
  CHECK(seq.ids[uncond_image_begin()] == v.id(Special::kImageBegin));
  CHECK(seq.maskable_count() == 4);
  CHECK(uncond_canvas(2, 2, g.cells, v) == seq.ids);
  std::vector<TokenId> short_cells(3, v.image_token(0));
  CHECK(error_kind([&] { uncond_canvas(2, 2, short_cells, v); }) == ErrorKind::kContract);
}

TEST_CASE("understanding layout exposes only the answer slots") {
  Corpus corpus(Vocabulary(), {});
  const Vocabulary& v = corpus.vocab();
  const Sample s = corpus.generate_sample(2);
  const QAItem& q = s.qa.front();
  const std::vector<TokenId> answer{corpus.lexicon().id(q.choices[static_cast<std::size_t>(q.correct_index)])};
  const TokenSequence seq = mmu_sequence(s.grid, q.question, answer, 8, v);
  const std::size_t begin = mmu_answer_begin(8, 8, q.question.size());
  CHECK(seq.size() == begin + 8);
  CHECK(seq.ids[begin - 1] == v.id(Special::kAnswerBegin));
  CHECK(seq.ids[begin] == answer[0]);
  for (std::size_t i = begin + 1; i < seq.size(); ++i) CHECK(seq.ids[i] == v.id(Special::kAnswerEnd));
  CHECK(seq.maskable_count() == 8);
  for (std::size_t i = 0; i < begin; ++i) CHECK(seq.maskable[i] == 0);
  CHECK(mmu_prompt(s.grid, q.question, v).ids == std::vector<TokenId>(seq.ids.begin(), seq.ids.begin() + begin));

  std::vector<TokenId> too_long(8, answer[0]);
  CHECK(error_kind([&] { mmu_sequence(s.grid, q.question, too_long, 8, v); }) == ErrorKind::kParameter);
  std::vector<TokenId> image_answer{v.image_token(1)};
  CHECK(error_kind([&] { mmu_sequence(s.grid, q.question, image_answer, 8, v); }) == ErrorKind::kClass);
}

}  // TEST_SUITE
