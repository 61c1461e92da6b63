// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>

#include "support.hpp"
#include "unidiff/vocab.hpp"

using namespace unidiff;
using unidiff::test::error_kind;

TEST_SUITE("vocab") {

TEST_CASE("id ranges partition the vocabulary") {
  Vocabulary v;
  CHECK(v.text_count() == 64);
  CHECK(v.image_count() == 16);
  CHECK(v.total_size() == 64 + 16 + kSpecialCount);
  CHECK(v.image_subrange().count == 16);
  int text = 0, image = 0, special = 0;
  for (TokenId id = 0; id < v.total_size(); ++id) {
    switch (v.classify(id)) {
      case TokenClass::kText: ++text; CHECK(v.text_subrange().contains(id)); break;
      case TokenClass::kImage: ++image; CHECK(v.image_subrange().contains(id)); break;
      case TokenClass::kSpecial: ++special; CHECK(v.special_subrange().contains(id)); break;
    }
  }
  CHECK(text == 64);
  CHECK(image == 16);
  CHECK(special == kSpecialCount);
  // specials take the highest ids, in table order
  CHECK(v.id(Special::kImageBegin) == 80);
  CHECK(v.id(Special::kEndOfText) == v.total_size() - 1);
  std::set<TokenId> ids;
  for (int s = 0; s < kSpecialCount; ++s) ids.insert(v.id(static_cast<Special>(s)));
  CHECK(ids.size() == static_cast<std::size_t>(kSpecialCount));
}

TEST_CASE("manifest roundtrip and hash") {
  Vocabulary v(40, 12);
  Vocabulary back = Vocabulary::from_manifest(v.manifest());
  CHECK(back == v);
  CHECK(back.manifest_hash() == v.manifest_hash());
  CHECK(Vocabulary().manifest_hash() != v.manifest_hash());
  CHECK(error_kind([] { Vocabulary::from_manifest("{not json"); }) == ErrorKind::kConfiguration);
}

TEST_CASE("serialize 2x3 places end-of-line at 4 and 8") {
  Vocabulary v;
  GridImage g(2, 3, v.image_token(1));
  const TokenSequence s = serialize_grid(g, v);
  REQUIRE(s.size() == 10);
  const TokenId eol = v.id(Special::kEndOfLine);
  std::vector<int> eols;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.ids[i] == eol) eols.push_back(static_cast<int>(i));
  CHECK(eols == std::vector<int>{4, 8});
  CHECK(s.ids.front() == v.id(Special::kImageBegin));
  CHECK(s.ids.back() == v.id(Special::kImageEnd));
}

TEST_CASE("serialize 1x1") {
  Vocabulary v;
  GridImage g(1, 1, v.image_token(5));
  const TokenSequence s = serialize_grid(g, v);
  CHECK(s.ids == std::vector<TokenId>{v.id(Special::kImageBegin), v.image_token(5), v.id(Special::kEndOfLine),
                                      v.id(Special::kImageEnd)});
  CHECK(s.maskable == std::vector<std::uint8_t>{0, 1, 0, 0});
}

TEST_CASE("2x4 and 4x2 over the same cells differ") {
  Vocabulary v;
  GridImage a(2, 4, 0), b(4, 2, 0);
  for (int i = 0; i < 8; ++i) a.cells[i] = b.cells[i] = v.image_token(i);
  CHECK(serialize_grid(a, v).ids != serialize_grid(b, v).ids);
}

TEST_CASE("invalid grids") {
  Vocabulary v;
  GridImage g(2, 2, v.image_token(0));
  g.cells[3] = 3;  // a text id
  CHECK(error_kind([&] { serialize_grid(g, v); }) == ErrorKind::kInvalidGrid);
  GridImage empty;
  CHECK(error_kind([&] { serialize_grid(empty, v); }) == ErrorKind::kInvalidGrid);
}

TEST_CASE("parse errors") {
  Vocabulary v;
  const TokenId b = v.id(Special::kImageBegin), e = v.id(Special::kImageEnd), eol = v.id(Special::kEndOfLine);
  const TokenId c = v.image_token(2);
  SUBCASE("ragged rows") {
    std::vector<TokenId> seq{b, c, c, c, eol, c, c, eol, e};
    CHECK(error_kind([&] { parse_grid(seq, v); }) == ErrorKind::kStructure);
  }
  SUBCASE("text id in body") {
    std::vector<TokenId> seq{b, c, 7, eol, e};
    CHECK(error_kind([&] { parse_grid(seq, v); }) == ErrorKind::kClass);
  }
  SUBCASE("missing delimiters") {
    std::vector<TokenId> seq{c, eol, e};
    CHECK(error_kind([&] { parse_grid(seq, v); }) == ErrorKind::kFraming);
    std::vector<TokenId> open{b, c, eol};
    CHECK(error_kind([&] { parse_grid(open, v); }) == ErrorKind::kFraming);
    std::vector<TokenId> unterminated{b, c, e};
    CHECK(error_kind([&] { parse_grid(unterminated, v); }) == ErrorKind::kFraming);
  }
}

TEST_CASE("random 8x8 roundtrip") {
  Vocabulary v;
  Rng rng(3);
  GridImage g = test::random_grid(v, 8, 8, rng);
  CHECK(parse_grid(serialize_grid(g, v).ids, v) == g);
}

TEST_CASE("serialization length and roundtrip for every shape up to 32x32") {
  Vocabulary v;
  Rng rng(11);
  for (int h = 1; h <= 32; ++h) {
    for (int w = 1; w <= 32; ++w) {
      GridImage g = test::random_grid(v, h, w, rng);
      const TokenSequence s = serialize_grid(g, v);
      REQUIRE(s.size() == 2 + static_cast<std::size_t>(h) * (w + 1));
      REQUIRE(s.size() == serialized_length(h, w));
      REQUIRE(parse_grid(s.ids, v) == g);
      REQUIRE(s.ids[cell_offset(w, h - 1, w - 1)] == g.at(h - 1, w - 1));
    }
  }
}

TEST_CASE("wrap_pair") {
  Vocabulary v;
  GridImage one(1, 1, v.image_token(0));
  CHECK(wrap_pair({}, one, v).size() == 6);
  std::vector<TokenId> text{1, 2, 3};
  GridImage two(2, 2, v.image_token(0));
  const TokenSequence s = wrap_pair(text, two, v);
  CHECK(s.size() == 13);
  CHECK(s.classes[1] == TokenClass::kText);
  CHECK(s.classes[6] == TokenClass::kImage);
  CHECK(s.classes[5] == TokenClass::kSpecial);
  std::vector<TokenId> bad{1, v.image_token(3)};
  CHECK(error_kind([&] { wrap_pair(bad, two, v); }) == ErrorKind::kClass);
}

}  // TEST_SUITE
