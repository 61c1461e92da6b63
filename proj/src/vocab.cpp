// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/vocab.hpp"

#include <json.hpp>

#include "unidiff/error.hpp"
#include "unidiff/rng.hpp"

namespace unidiff {

namespace {

constexpr std::array<std::string_view, kSpecialCount> kSpecialNames = {
    "<IMAGE>",     "</IMAGE>",   "<canny>",     "</canny>",         "<depth>",
    "</depth>",    "<openpose>", "</openpose>", "<hed>",            "</hed>",
    "<system>",    "</system>",  "<user>",      "</user>",          "<answer>",
    "</answer>",   "<end-of-line>", "<uncondition>", "[MASK]", "<|startoftext|>",
    "<|endoftext|>",
};

}  // namespace

std::string_view special_name(Special s) { return kSpecialNames[static_cast<std::size_t>(s)]; }

Vocabulary::Vocabulary(int text_count, int image_count) {
  require(text_count > 0 && image_count > 0, ErrorKind::kConfiguration,
          "vocabulary sizes must be positive");
  text_ = {0, text_count};
  image_ = {text_count, image_count};
  special_ = {text_count + image_count, kSpecialCount};
}

TokenClass Vocabulary::classify(TokenId id) const {
  require(valid(id), ErrorKind::kVocabulary, "token id " + std::to_string(id) + " outside vocabulary");
  if (text_.contains(id)) return TokenClass::kText;
  if (image_.contains(id)) return TokenClass::kImage;
  return TokenClass::kSpecial;
}

std::string Vocabulary::manifest() const {
  nlohmann::ordered_json j;
  j["format"] = "unidiff-vocab";
  j["version"] = 1;
  j["total_size"] = total_size();
  j["text"] = {{"begin", text_.begin}, {"count", text_.count}};
  j["image"] = {{"begin", image_.begin}, {"count", image_.count}};
  nlohmann::ordered_json specials;
  for (int i = 0; i < kSpecialCount; ++i) {
    specials[std::string(kSpecialNames[i])] = special_.begin + i;
  }
  j["special"] = specials;
  return j.dump(2);
}

std::uint64_t Vocabulary::manifest_hash() const { return fnv1a(manifest()); }

Vocabulary Vocabulary::from_manifest(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfiguration, std::string("bad vocabulary manifest: ") + e.what());
  }
  require(j.value("format", "") == "unidiff-vocab", ErrorKind::kConfiguration,
          "not a vocabulary manifest");
  Vocabulary v(j.at("text").at("count").get<int>(), j.at("image").at("count").get<int>());
  require(v.manifest_hash() == fnv1a(nlohmann::ordered_json::parse(json).dump(2)),
          ErrorKind::kConfiguration, "vocabulary manifest does not match this build's layout");
  return v;
}

void TokenSequence::append(const TokenSequence& other) {
  ids.insert(ids.end(), other.ids.begin(), other.ids.end());
  classes.insert(classes.end(), other.classes.begin(), other.classes.end());
  maskable.insert(maskable.end(), other.maskable.begin(), other.maskable.end());
}

std::size_t TokenSequence::maskable_count() const {
  std::size_t n = 0;
  for (auto m : maskable) n += m;
  return n;
}

void push_token(TokenSequence& seq, const Vocabulary& vocab, TokenId id) {
  TokenClass cls = vocab.classify(id);
  seq.push(id, cls, cls != TokenClass::kSpecial);
}

void push_special(TokenSequence& seq, const Vocabulary& vocab, Special s) {
  seq.push(vocab.id(s), TokenClass::kSpecial, false);
}

void validate_grid(const GridImage& grid, const Vocabulary& vocab) {
  require(grid.height >= 1 && grid.width >= 1, ErrorKind::kInvalidGrid,
          "grid must be at least 1x1");
  require(grid.cells.size() == static_cast<std::size_t>(grid.height) * grid.width,
          ErrorKind::kInvalidGrid, "cell count does not match height x width");
  const IdRange img = vocab.image_subrange();
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (!img.contains(grid.cells[i])) {
      fail(ErrorKind::kInvalidGrid, "cell " + std::to_string(i) + " holds non-image token " +
                                        std::to_string(grid.cells[i]));
    }
  }
}

TokenSequence serialize_grid(const GridImage& grid, const Vocabulary& vocab) {
  validate_grid(grid, vocab);
  TokenSequence seq;
  seq.ids.reserve(serialized_length(grid.height, grid.width));
  push_special(seq, vocab, Special::kImageBegin);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) seq.push(grid.at(r, c), TokenClass::kImage, true);
    push_special(seq, vocab, Special::kEndOfLine);
  }
  push_special(seq, vocab, Special::kImageEnd);
  return seq;
}

GridImage parse_grid(std::span<const TokenId> seq, const Vocabulary& vocab) {
  const TokenId begin = vocab.id(Special::kImageBegin);
  const TokenId end = vocab.id(Special::kImageEnd);
  const TokenId eol = vocab.id(Special::kEndOfLine);
  require(seq.size() >= 2 && seq.front() == begin && seq.back() == end, ErrorKind::kFraming,
          "image sequence must be framed by <IMAGE> ... </IMAGE>");

  GridImage grid;
  int row_len = 0;
  int expected_width = -1;
  for (std::size_t i = 1; i + 1 < seq.size(); ++i) {
    const TokenId id = seq[i];
    if (id == eol) {
      require(row_len > 0, ErrorKind::kStructure, "empty image row");
      if (expected_width < 0) expected_width = row_len;
      require(row_len == expected_width, ErrorKind::kStructure,
              "ragged rows: " + std::to_string(row_len) + " vs " + std::to_string(expected_width));
      ++grid.height;
      row_len = 0;
      continue;
    }
    if (!vocab.valid(id) || vocab.classify(id) != TokenClass::kImage) {
      fail(ErrorKind::kClass, "non-image token " + std::to_string(id) + " at position " + std::to_string(i));
    }
    grid.cells.push_back(id);
    ++row_len;
  }
  require(row_len == 0, ErrorKind::kFraming, "last image row is not terminated by <end-of-line>");
  require(grid.height > 0, ErrorKind::kStructure, "image has no rows");
  grid.width = expected_width;
  return grid;
}

TokenSequence wrap_pair(std::span<const TokenId> text, const GridImage& grid, const Vocabulary& vocab) {
  TokenSequence seq;
  push_special(seq, vocab, Special::kStartOfText);
  for (TokenId id : text) {
    require(vocab.valid(id) && vocab.classify(id) == TokenClass::kText, ErrorKind::kClass,
            "caption contains non-text token " + std::to_string(id));
    seq.push(id, TokenClass::kText, true);
  }
  push_special(seq, vocab, Special::kEndOfText);
  seq.append(serialize_grid(grid, vocab));
  return seq;
}

}  // namespace unidiff
