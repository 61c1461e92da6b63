// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "unidiff/rng.hpp"
#include "unidiff/vocab.hpp"

namespace unidiff {

enum class Shape : std::uint8_t { kSquare, kBar, kFrame };
enum class Region : std::uint8_t { kTopLeft, kTopRight, kBottomLeft, kBottomRight, kCenter };

inline constexpr int kRegionCount = 5;
inline constexpr int kShapeCount = 3;

std::string_view shape_word(Shape s);
std::string_view region_word(Region r);
std::optional<Region> parse_region(std::string_view word);

struct SceneObject {
  Shape shape = Shape::kSquare;
  int color = 0;  // palette index, i.e. offset into the image subrange
  Region region = Region::kTopLeft;
  bool operator==(const SceneObject&) const = default;
};

struct SceneSpec {
  std::vector<SceneObject> objects;  // sorted by region
  int background = 0;
  bool operator==(const SceneSpec&) const = default;
};

struct Triple {
  std::string entity;
  std::string relation;
  std::string value;
  bool operator==(const Triple&) const = default;
};

enum class QuestionKind : std::uint8_t { kColorOfRegion, kRegionOfColor, kCount, kBackground };

std::string_view question_kind_name(QuestionKind k);
QuestionKind parse_question_kind(std::string_view name);

struct QAItem {
  QuestionKind kind = QuestionKind::kColorOfRegion;
  std::string subject;                 // region word or color word, empty for scene questions
  TokenSequence question;              // <user> ... </user>
  std::array<std::string, 4> choices;  // answer words
  int correct_index = 0;
};

// Word-level text vocabulary. Word i maps to text id i.
class Lexicon {
 public:
  Lexicon();

  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(TokenId id) const;
  std::size_t size() const { return words_.size(); }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  // Throws kConfiguration when the lexicon does not fit in the text range.
  void check_fits(const Vocabulary& vocab) const;

  static const std::vector<std::string>& color_words();
  static const std::vector<std::string>& color_hex();
  static const std::vector<std::string>& quantity_words();

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

struct GrammarConfig {
  int height = 8;
  int width = 8;
  int min_objects = 1;
  int max_objects = 3;
};

struct Box {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  bool contains(int r, int c) const { return r >= row && r < row + height && c >= col && c < col + width; }
};

// Quadrants are the four ceil(h/2) x ceil(w/2) corners, center the middle
// block of the same size. On a 1x1 grid every region is the single cell.
Box region_box(int height, int width, Region region);

struct Sample {
  std::uint64_t seed = 0;
  SceneSpec scene;
  std::vector<TokenId> caption;
  GridImage grid;
  std::vector<Triple> triples;
  std::vector<QAItem> qa;
};

struct QuestionPools {
  std::vector<std::string> colors;
  std::vector<std::string> regions;
  std::vector<std::string> quantities;
  std::vector<std::string> relations;

  static QuestionPools defaults(const Vocabulary& vocab);
};

class Corpus {
 public:
  Corpus(Vocabulary vocab, GrammarConfig config);

  const Vocabulary& vocab() const { return vocab_; }
  const Lexicon& lexicon() const { return lexicon_; }
  const GrammarConfig& config() const { return config_; }
  const QuestionPools& pools() const { return pools_; }

  SceneSpec sample_scene(Rng& rng) const;
  GridImage render(const SceneSpec& scene) const;
  std::vector<TokenId> caption(const SceneSpec& scene) const;
  std::vector<Triple> triples(const SceneSpec& scene) const;

  // Inverse of caption(); throws kQuery on text outside the grammar.
  SceneSpec parse_caption(std::span<const TokenId> caption) const;

  // Deterministic in seed: caption, grid, triples and questions.
  Sample generate_sample(std::uint64_t seed) const;
  std::vector<Sample> generate(std::uint64_t seed, std::size_t count) const;

  // Sample for a given caption: the scene it describes, rendered, with
  // questions drawn from `seed`. Throws kQuery for text outside the grammar.
  Sample sample_from_caption(std::span<const TokenId> caption, std::uint64_t seed) const;

  std::vector<QAItem> triples_to_questions(const std::vector<Triple>& triples, Rng& rng) const;

  // Re-tokenize a QA item from its structured fields (kind, subject, choices).
  TokenSequence question_tokens(const QAItem& item) const;

 private:
  Vocabulary vocab_;
  GrammarConfig config_;
  Lexicon lexicon_;
  QuestionPools pools_;
};

std::vector<QAItem> triples_to_questions(const std::vector<Triple>& triples, const QuestionPools& pools,
                                         const Lexicon& lexicon, const Vocabulary& vocab, Rng& rng);

// Ground-truth answer read off the grid alone. Pure.
int oracle_answer(const GridImage& grid, const QAItem& qa, const Vocabulary& vocab);

// Palette index that covers the most cells; ties go to the lowest index.
int plurality_color(const GridImage& grid, const Vocabulary& vocab);

// Number of regions holding a legible non-background object.
int count_objects(const GridImage& grid, const Vocabulary& vocab);

// Dataset persistence: a header line then one JSON record per line.
void write_dataset(const std::string& path, const Corpus& corpus, const std::vector<Sample>& samples);
std::vector<Sample> read_dataset(const std::string& path, const Corpus& corpus);

}  // namespace unidiff
