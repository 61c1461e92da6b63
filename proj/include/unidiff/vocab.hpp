// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace unidiff {

using TokenId = std::int32_t;

enum class TokenClass : std::uint8_t { kText, kImage, kSpecial };

// Table order; the special range is laid out in exactly this order.
enum class Special : std::uint8_t {
  kImageBegin,
  kImageEnd,
  kCannyBegin,
  kCannyEnd,
  kDepthBegin,
  kDepthEnd,
  kOpenposeBegin,
  kOpenposeEnd,
  kHedBegin,
  kHedEnd,
  kSystemBegin,
  kSystemEnd,
  kUserBegin,
  kUserEnd,
  kAnswerBegin,
  kAnswerEnd,
  kEndOfLine,
  kUncondition,
  kMask,
  kStartOfText,
  kEndOfText,
};

inline constexpr int kSpecialCount = 21;

std::string_view special_name(Special s);

struct IdRange {
  TokenId begin = 0;
  TokenId count = 0;
  TokenId end() const { return begin + count; }
  bool contains(TokenId id) const { return id >= begin && id < end(); }
  bool operator==(const IdRange&) const = default;
};

class Vocabulary {
 public:
  explicit Vocabulary(int text_count = 64, int image_count = 16);

  int text_count() const { return text_.count; }
  int image_count() const { return image_.count; }
  int total_size() const { return special_.end(); }

  IdRange text_subrange() const { return text_; }
  IdRange image_subrange() const { return image_; }
  IdRange special_subrange() const { return special_; }

  TokenClass classify(TokenId id) const;
  bool valid(TokenId id) const { return id >= 0 && id < total_size(); }

  TokenId id(Special s) const { return special_.begin + static_cast<TokenId>(s); }
  TokenId mask() const { return id(Special::kMask); }

  TokenId image_token(int color) const { return image_.begin + color; }
  int color_of(TokenId id) const { return id - image_.begin; }

  // name -> id and class ranges as a JSON document.
  std::string manifest() const;
  std::uint64_t manifest_hash() const;

  static Vocabulary from_manifest(std::string_view json);

  bool operator==(const Vocabulary& other) const = default;

 private:
  IdRange text_;
  IdRange image_;
  IdRange special_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<TokenClass> classes;
  std::vector<std::uint8_t> maskable;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  void push(TokenId id, TokenClass cls, bool can_mask) {
    ids.push_back(id);
    classes.push_back(cls);
    maskable.push_back(can_mask ? 1 : 0);
  }
  void append(const TokenSequence& other);

  std::size_t maskable_count() const;
};

// Tags a single token: text and image content are maskable, structure is not.
void push_token(TokenSequence& seq, const Vocabulary& vocab, TokenId id);
void push_special(TokenSequence& seq, const Vocabulary& vocab, Special s);

struct GridImage {
  int height = 0;
  int width = 0;
  std::vector<TokenId> cells;  // row-major

  GridImage() = default;
  GridImage(int h, int w, TokenId fill) : height(h), width(w), cells(static_cast<std::size_t>(h) * w, fill) {}

  TokenId at(int r, int c) const { return cells[static_cast<std::size_t>(r) * width + c]; }
  TokenId& at(int r, int c) { return cells[static_cast<std::size_t>(r) * width + c]; }
  std::size_t size() const { return cells.size(); }

  bool operator==(const GridImage&) const = default;
};

// Throws kInvalidGrid for bad shape or non-image cells.
void validate_grid(const GridImage& grid, const Vocabulary& vocab);

// Serialized length of an h x w grid: 2 + h * (w + 1).
inline std::size_t serialized_length(int height, int width) {
  return 2 + static_cast<std::size_t>(height) * (width + 1);
}

// Sequence offset of cell (r, c) relative to the IMAGE_BEGIN token.
inline std::size_t cell_offset(int width, int r, int c) {
  return 1 + static_cast<std::size_t>(r) * (width + 1) + c;
}

TokenSequence serialize_grid(const GridImage& grid, const Vocabulary& vocab);
GridImage parse_grid(std::span<const TokenId> seq, const Vocabulary& vocab);
TokenSequence wrap_pair(std::span<const TokenId> text, const GridImage& grid, const Vocabulary& vocab);

}  // namespace unidiff
