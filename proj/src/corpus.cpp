// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "unidiff/error.hpp"

namespace unidiff {

namespace {

constexpr std::array<std::string_view, kShapeCount> kShapeWords = {"square", "bar", "frame"};
constexpr std::array<std::string_view, kRegionCount> kRegionWords = {
    "top-left", "top-right", "bottom-left", "bottom-right", "center"};

const std::vector<std::string> kColorWords = {
    "red",  "orange", "yellow", "lime",   "green",   "teal", "cyan",  "sky",
    "blue", "navy",   "purple", "violet", "magenta", "pink", "brown", "gray"};

const std::vector<std::string> kColorHex = {
    "#e6194b", "#f58231", "#ffe119", "#bfef45", "#3cb44b", "#469990", "#42d4f4", "#87ceeb",
    "#4363d8", "#000075", "#911eb4", "#dcbeff", "#f032e6", "#fabed4", "#9a6324", "#a9a9a9"};

const std::vector<std::string> kQuantityWords = {"zero", "one", "two", "three", "four", "five"};

const std::vector<std::string> kGlueWords = {"and",  "on",  "background", "what", "color", "where",
                                             "how",  "many", "objects",   "?",    "answer", "is"};

std::string pool_word(const std::vector<std::string>& pool, std::size_t i) { return pool.at(i); }

}  // namespace

std::string_view shape_word(Shape s) { return kShapeWords[static_cast<std::size_t>(s)]; }
std::string_view region_word(Region r) { return kRegionWords[static_cast<std::size_t>(r)]; }

std::optional<Region> parse_region(std::string_view word) {
  for (int i = 0; i < kRegionCount; ++i) {
    if (kRegionWords[i] == word) return static_cast<Region>(i);
  }
  return std::nullopt;
}

std::string_view question_kind_name(QuestionKind k) {
  switch (k) {
    case QuestionKind::kColorOfRegion: return "color_of_region";
    case QuestionKind::kRegionOfColor: return "region_of_color";
    case QuestionKind::kCount: return "count";
    case QuestionKind::kBackground: return "background";
  }
  return "?";
}

QuestionKind parse_question_kind(std::string_view name) {
  for (auto k : {QuestionKind::kColorOfRegion, QuestionKind::kRegionOfColor, QuestionKind::kCount,
                 QuestionKind::kBackground}) {
    if (question_kind_name(k) == name) return k;
  }
  fail(ErrorKind::kQuery, "unknown question kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Lexicon

Lexicon::Lexicon() {
  for (const auto& w : kColorWords) words_.push_back(w);
  for (auto w : kShapeWords) words_.emplace_back(w);
  for (auto w : kRegionWords) words_.emplace_back(w);
  for (const auto& w : kQuantityWords) words_.push_back(w);
  for (const auto& w : kGlueWords) words_.push_back(w);
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<TokenId>(i));
}

const std::vector<std::string>& Lexicon::color_words() { return kColorWords; }
const std::vector<std::string>& Lexicon::color_hex() { return kColorHex; }
const std::vector<std::string>& Lexicon::quantity_words() { return kQuantityWords; }

bool Lexicon::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

TokenId Lexicon::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  require(it != index_.end(), ErrorKind::kConfiguration, "word '" + std::string(word) + "' not in lexicon");
  return it->second;
}

const std::string& Lexicon::word(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < words_.size(), ErrorKind::kVocabulary,
          "text id " + std::to_string(id) + " has no word");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Lexicon::encode(std::string_view text) const {
  std::vector<TokenId> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(id(w));
  return out;
}

std::string Lexicon::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

void Lexicon::check_fits(const Vocabulary& vocab) const {
  require(words_.size() <= static_cast<std::size_t>(vocab.text_count()), ErrorKind::kConfiguration,
          "lexicon has " + std::to_string(words_.size()) + " words but the text range holds " +
              std::to_string(vocab.text_count()));
  require(kColorWords.size() <= static_cast<std::size_t>(vocab.image_count()), ErrorKind::kConfiguration,
          "palette has " + std::to_string(kColorWords.size()) + " colors but the image range holds " +
              std::to_string(vocab.image_count()));
}

// ---------------------------------------------------------------------------
// Geometry

Box region_box(int height, int width, Region region) {
  const int bh = (height + 1) / 2;
  const int bw = (width + 1) / 2;
  switch (region) {
    case Region::kTopLeft: return {0, 0, bh, bw};
    case Region::kTopRight: return {0, width - bw, bh, bw};
    case Region::kBottomLeft: return {height - bh, 0, bh, bw};
    case Region::kBottomRight: return {height - bh, width - bw, bh, bw};
    case Region::kCenter: return {(height - bh) / 2, (width - bw) / 2, bh, bw};
  }
  fail(ErrorKind::kQuery, "undefined region");
}

namespace {

bool shape_covers(Shape shape, const Box& box, int r, int c) {
  if (!box.contains(r, c)) return false;
  const int lr = r - box.row;
  const int lc = c - box.col;
  switch (shape) {
    case Shape::kSquare: return true;
    case Shape::kFrame:
      return lr == 0 || lc == 0 || lr == box.height - 1 || lc == box.width - 1;
    case Shape::kBar: {
      const int top = box.height / 4;
      const int rows = std::max(1, box.height / 2);
      return lr >= top && lr < top + rows;
    }
  }
  return false;
}

std::vector<int> color_histogram(const GridImage& grid, const Vocabulary& vocab, const Box* box) {
  std::vector<int> hist(static_cast<std::size_t>(vocab.image_count()), 0);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) {
      if (box && !box->contains(r, c)) continue;
      const int color = vocab.color_of(grid.at(r, c));
      if (color >= 0 && color < vocab.image_count()) ++hist[static_cast<std::size_t>(color)];
    }
  }
  return hist;
}

int legibility_threshold(const Box& box) { return std::max(1, (box.height * box.width * 5 + 15) / 16); }

TokenSequence make_question_tokens(const QAItem& item, const Lexicon& lexicon, const Vocabulary& vocab) {
  TokenSequence q;
  push_special(q, vocab, Special::kUserBegin);
  auto word = [&](std::string_view w) { q.push(lexicon.id(w), TokenClass::kText, true); };
  switch (item.kind) {
    case QuestionKind::kColorOfRegion: word("what"), word("color"), word(item.subject); break;
    case QuestionKind::kRegionOfColor: word("where"), word(item.subject); break;
    case QuestionKind::kCount: word("how"), word("many"), word("objects"); break;
    case QuestionKind::kBackground: word("what"), word("color"), word("background"); break;
  }
  word("?");
  for (const auto& c : item.choices) word(c);
  push_special(q, vocab, Special::kUserEnd);
  return q;
}

}  // namespace

int plurality_color(const GridImage& grid, const Vocabulary& vocab) {
  auto hist = color_histogram(grid, vocab, nullptr);
  return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

int count_objects(const GridImage& grid, const Vocabulary& vocab) {
  const int bg = plurality_color(grid, vocab);
  int count = 0;
  for (int i = 0; i < kRegionCount; ++i) {
    const Box box = region_box(grid.height, grid.width, static_cast<Region>(i));
    auto hist = color_histogram(grid, vocab, &box);
    hist[static_cast<std::size_t>(bg)] = 0;
    if (*std::max_element(hist.begin(), hist.end()) >= legibility_threshold(box)) ++count;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Corpus

QuestionPools QuestionPools::defaults(const Vocabulary& vocab) {
  QuestionPools p;
  const int colors = std::min<int>(vocab.image_count(), static_cast<int>(kColorWords.size()));
  for (int i = 0; i < colors; ++i) p.colors.push_back(kColorWords[static_cast<std::size_t>(i)]);
  for (auto w : kRegionWords) p.regions.emplace_back(w);
  p.quantities = kQuantityWords;
  p.relations = {"color", "position", "count", "background"};
  return p;
}

Corpus::Corpus(Vocabulary vocab, GrammarConfig config)
    : vocab_(vocab), config_(config), pools_(QuestionPools::defaults(vocab)) {
  lexicon_.check_fits(vocab_);
  require(config_.height >= 4 && config_.width >= 4 && config_.height % 2 == 0 && config_.width % 2 == 0,
          ErrorKind::kConfiguration, "grammar grids must have even sides of at least 4");
  require(config_.min_objects >= 1 && config_.max_objects <= 3 && config_.min_objects <= config_.max_objects,
          ErrorKind::kConfiguration, "object count must lie in [1, 3]");
  require(vocab_.image_count() >= config_.max_objects + 1 && vocab_.image_count() <= static_cast<int>(kColorWords.size()),
          ErrorKind::kConfiguration, "image range must hold between max_objects+1 and 16 colors");
}

SceneSpec Corpus::sample_scene(Rng& rng) const {
  const int colors = vocab_.image_count();
  for (;;) {
    SceneSpec scene;
    std::uniform_int_distribution<int> count_dist(config_.min_objects, config_.max_objects);
    const int n = count_dist(rng);

    std::array<int, kRegionCount> regions{};
    std::iota(regions.begin(), regions.end(), 0);
    std::shuffle(regions.begin(), regions.end(), rng);
    std::sort(regions.begin(), regions.begin() + n);

    std::vector<int> palette(static_cast<std::size_t>(colors));
    std::iota(palette.begin(), palette.end(), 0);
    std::shuffle(palette.begin(), palette.end(), rng);

    std::uniform_int_distribution<int> shape_dist(0, kShapeCount - 1);
    for (int i = 0; i < n; ++i) {
      scene.objects.push_back({static_cast<Shape>(shape_dist(rng)), palette[static_cast<std::size_t>(i)],
                               static_cast<Region>(regions[static_cast<std::size_t>(i)])});
    }
    scene.background = palette[static_cast<std::size_t>(n)];

    // Keep only scenes where the background is a strict plurality, so the
    // oracle can recover it from the pixels alone.
    const GridImage grid = render(scene);
    auto hist = color_histogram(grid, vocab_, nullptr);
    const int bg_count = hist[static_cast<std::size_t>(scene.background)];
    bool legible = true;
    for (const auto& o : scene.objects) legible &= hist[static_cast<std::size_t>(o.color)] < bg_count;
    if (legible) return scene;
  }
}

GridImage Corpus::render(const SceneSpec& scene) const {
  GridImage grid(config_.height, config_.width, vocab_.image_token(scene.background));
  // Quadrants first, then the center so it stays intact where boxes overlap.
  auto paint = [&](const SceneObject& o) {
    const Box box = region_box(grid.height, grid.width, o.region);
    for (int r = box.row; r < box.row + box.height; ++r) {
      for (int c = box.col; c < box.col + box.width; ++c) {
        if (shape_covers(o.shape, box, r, c)) grid.at(r, c) = vocab_.image_token(o.color);
      }
    }
  };
  for (const auto& o : scene.objects) {
    if (o.region != Region::kCenter) paint(o);
  }
  for (const auto& o : scene.objects) {
    if (o.region == Region::kCenter) paint(o);
  }
  return grid;
}

std::vector<TokenId> Corpus::caption(const SceneSpec& scene) const {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    if (i > 0) out.push_back(lexicon_.id("and"));
    out.push_back(lexicon_.id(kColorWords[static_cast<std::size_t>(o.color)]));
    out.push_back(lexicon_.id(shape_word(o.shape)));
    out.push_back(lexicon_.id(region_word(o.region)));
  }
  out.push_back(lexicon_.id("on"));
  out.push_back(lexicon_.id(kColorWords[static_cast<std::size_t>(scene.background)]));
  out.push_back(lexicon_.id("background"));
  return out;
}

SceneSpec Corpus::parse_caption(std::span<const TokenId> caption) const {
  std::vector<std::string> words;
  for (TokenId id : caption) words.push_back(lexicon_.word(id));

  auto color_index = [&](const std::string& w) {
    auto it = std::find(kColorWords.begin(), kColorWords.end(), w);
    require(it != kColorWords.end(), ErrorKind::kQuery, "expected a color, got '" + w + "'");
    return static_cast<int>(it - kColorWords.begin());
  };
  auto shape_index = [&](const std::string& w) {
    for (int i = 0; i < kShapeCount; ++i) {
      if (kShapeWords[static_cast<std::size_t>(i)] == w) return static_cast<Shape>(i);
    }
    fail(ErrorKind::kQuery, "expected a shape, got '" + w + "'");
  };

  SceneSpec scene;
  std::size_t i = 0;
  for (;;) {
    require(i + 3 <= words.size(), ErrorKind::kQuery, "caption truncated");
    SceneObject o;
    o.color = color_index(words[i]);
    o.shape = shape_index(words[i + 1]);
    auto region = parse_region(words[i + 2]);
    require(region.has_value(), ErrorKind::kQuery, "expected a region, got '" + words[i + 2] + "'");
    o.region = *region;
    scene.objects.push_back(o);
    i += 3;
    require(i < words.size(), ErrorKind::kQuery, "caption truncated");
    if (words[i] == "and") {
      ++i;
      continue;
    }
    break;
  }
  require(i + 3 == words.size() && words[i] == "on" && words[i + 2] == "background", ErrorKind::kQuery,
          "caption must end with 'on <color> background'");
  scene.background = color_index(words[i + 1]);
  return scene;
}

std::vector<Triple> Corpus::triples(const SceneSpec& scene) const {
  std::vector<Triple> out;
  for (const auto& o : scene.objects) {
    const std::string color = kColorWords[static_cast<std::size_t>(o.color)];
    const std::string shape(shape_word(o.shape));
    const std::string region(region_word(o.region));
    out.push_back({shape + "@" + region, "color", color});
    out.push_back({color + " " + shape, "position", region});
  }
  out.push_back({"scene", "count", kQuantityWords[scene.objects.size()]});
  out.push_back({"scene", "background", kColorWords[static_cast<std::size_t>(scene.background)]});
  return out;
}

Sample Corpus::generate_sample(std::uint64_t seed) const {
  SeedSplitter split(seed);
  Rng scene_rng = split.rng("scene");
  Rng qa_rng = split.rng("qa");
  Sample s;
  s.seed = seed;
  s.scene = sample_scene(scene_rng);
  s.caption = caption(s.scene);
  s.grid = render(s.scene);
  s.triples = triples(s.scene);
  s.qa = triples_to_questions(s.triples, qa_rng);
  return s;
}

Sample Corpus::sample_from_caption(std::span<const TokenId> caption, std::uint64_t seed) const {
  SeedSplitter split(seed);
  Rng qa_rng = split.rng("qa");
  Sample s;
  s.seed = seed;
  s.scene = parse_caption(caption);
  s.caption = this->caption(s.scene);
  s.grid = render(s.scene);
  s.triples = triples(s.scene);
  s.qa = triples_to_questions(s.triples, qa_rng);
  return s;
}

std::vector<Sample> Corpus::generate(std::uint64_t seed, std::size_t count) const {
  std::vector<Sample> out(count);
  SeedSplitter split(seed);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < count; ++i) out[i] = generate_sample(split.seed("sample", i));
  return out;
}

TokenSequence Corpus::question_tokens(const QAItem& item) const {
  return make_question_tokens(item, lexicon_, vocab_);
}

std::vector<QAItem> Corpus::triples_to_questions(const std::vector<Triple>& triples, Rng& rng) const {
  return unidiff::triples_to_questions(triples, pools_, lexicon_, vocab_, rng);
}

std::vector<QAItem> triples_to_questions(const std::vector<Triple>& triples, const QuestionPools& pools,
                                         const Lexicon& lexicon, const Vocabulary& vocab, Rng& rng) {
  for (const auto* pool : {&pools.colors, &pools.regions, &pools.quantities, &pools.relations}) {
    require(pool->size() >= 4, ErrorKind::kConfiguration, "question pools need at least 4 entries per category");
  }
  std::vector<QAItem> out;
  for (const auto& t : triples) {
    QAItem item;
    const std::vector<std::string>* pool = nullptr;
    if (t.relation == "color") {
      item.kind = QuestionKind::kColorOfRegion;
      const auto at = t.entity.find('@');
      require(at != std::string::npos, ErrorKind::kQuery, "color triple entity lacks a region");
      item.subject = t.entity.substr(at + 1);
      pool = &pools.colors;
    } else if (t.relation == "position") {
      item.kind = QuestionKind::kRegionOfColor;
      item.subject = t.entity.substr(0, t.entity.find(' '));
      pool = &pools.regions;
    } else if (t.relation == "count") {
      item.kind = QuestionKind::kCount;
      pool = &pools.quantities;
    } else if (t.relation == "background") {
      item.kind = QuestionKind::kBackground;
      pool = &pools.colors;
    } else {
      fail(ErrorKind::kQuery, "unknown relation '" + t.relation + "'");
    }
    require(std::find(pool->begin(), pool->end(), t.value) != pool->end(), ErrorKind::kConfiguration,
            "answer '" + t.value + "' missing from its pool");

    // Same-category distractors.
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < pool->size(); ++i) {
      if ((*pool)[i] != t.value) others.push_back(i);
    }
    require(others.size() >= 3, ErrorKind::kConfiguration, "pool exhausted");
    std::shuffle(others.begin(), others.end(), rng);
    std::uniform_int_distribution<int> slot(0, 3);
    item.correct_index = slot(rng);
    std::size_t next = 0;
    for (int c = 0; c < 4; ++c) {
      item.choices[static_cast<std::size_t>(c)] =
          c == item.correct_index ? t.value : pool_word(*pool, others[next++]);
    }

    item.question = make_question_tokens(item, lexicon, vocab);
    out.push_back(std::move(item));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle

int oracle_answer(const GridImage& grid, const QAItem& qa, const Vocabulary& vocab) {
  validate_grid(grid, vocab);
  const auto& colors = kColorWords;
  auto color_of_word = [&](const std::string& w) -> int {
    auto it = std::find(colors.begin(), colors.end(), w);
    return it == colors.end() ? -1 : static_cast<int>(it - colors.begin());
  };
  auto argmax = [](const std::array<int, 4>& scores) {
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  };
  const int bg = plurality_color(grid, vocab);
  const auto full_hist = color_histogram(grid, vocab, nullptr);
  auto count_in = [&](const std::vector<int>& hist, int color) {
    return color >= 0 && color < static_cast<int>(hist.size()) ? hist[static_cast<std::size_t>(color)] : 0;
  };

  switch (qa.kind) {
    case QuestionKind::kColorOfRegion: {
      auto region = parse_region(qa.subject);
      require(region.has_value(), ErrorKind::kQuery, "undefined region '" + qa.subject + "'");
      const Box box = region_box(grid.height, grid.width, *region);
      const auto hist = color_histogram(grid, vocab, &box);
      // Prefer the dominant non-background color; fall back to raw counts
      // when the region holds nothing but background.
      std::array<int, 4> scores{};
      int best = 0;
      for (int i = 0; i < 4; ++i) {
        const int color = color_of_word(qa.choices[static_cast<std::size_t>(i)]);
        scores[static_cast<std::size_t>(i)] = color == bg ? -1 : count_in(hist, color);
        best = std::max(best, scores[static_cast<std::size_t>(i)]);
      }
      if (best == 0) {
        for (int i = 0; i < 4; ++i) {
          scores[static_cast<std::size_t>(i)] = count_in(hist, color_of_word(qa.choices[static_cast<std::size_t>(i)]));
        }
      }
      return argmax(scores);
    }
    case QuestionKind::kRegionOfColor: {
      const int color = color_of_word(qa.subject);
      require(color >= 0, ErrorKind::kQuery, "undefined color '" + qa.subject + "'");
      std::array<int, 4> scores{};
      for (int i = 0; i < 4; ++i) {
        auto region = parse_region(qa.choices[static_cast<std::size_t>(i)]);
        require(region.has_value(), ErrorKind::kQuery, "undefined region '" + qa.choices[static_cast<std::size_t>(i)] + "'");
        const Box box = region_box(grid.height, grid.width, *region);
        scores[static_cast<std::size_t>(i)] = count_in(color_histogram(grid, vocab, &box), color);
      }
      return argmax(scores);
    }
    case QuestionKind::kCount: {
      const int n = count_objects(grid, vocab);
      std::array<int, 4> scores{};
      for (int i = 0; i < 4; ++i) {
        const auto& q = kQuantityWords;
        auto it = std::find(q.begin(), q.end(), qa.choices[static_cast<std::size_t>(i)]);
        require(it != q.end(), ErrorKind::kQuery, "undefined quantity '" + qa.choices[static_cast<std::size_t>(i)] + "'");
        scores[static_cast<std::size_t>(i)] = -std::abs(static_cast<int>(it - q.begin()) - n);
      }
      return argmax(scores);
    }
    case QuestionKind::kBackground: {
      std::array<int, 4> scores{};
      for (int i = 0; i < 4; ++i) {
        scores[static_cast<std::size_t>(i)] = count_in(full_hist, color_of_word(qa.choices[static_cast<std::size_t>(i)]));
      }
      return argmax(scores);
    }
  }
  fail(ErrorKind::kQuery, "unknown question kind");
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr std::string_view kDatasetFormat = "unidiff-dataset";

nlohmann::json qa_to_json(const QAItem& qa) {
  return {{"kind", question_kind_name(qa.kind)},
          {"subject", qa.subject},
          {"question_ids", qa.question.ids},
          {"choices", qa.choices},
          {"correct_index", qa.correct_index}};
}

}  // namespace

void write_dataset(const std::string& path, const Corpus& corpus, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open '" + path + "' for writing");
  nlohmann::ordered_json header = {{"format", kDatasetFormat},
                                   {"version", 1},
                                   {"count", samples.size()},
                                   {"height", corpus.config().height},
                                   {"width", corpus.config().width},
                                   {"vocab_hash", std::to_string(corpus.vocab().manifest_hash())}};
  out << header.dump() << '\n';
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["seed"] = s.seed;
    rec["caption_ids"] = s.caption;
    rec["height"] = s.grid.height;
    rec["width"] = s.grid.width;
    rec["cells"] = s.grid.cells;
    auto triples = nlohmann::json::array();
    for (const auto& t : s.triples) triples.push_back({t.entity, t.relation, t.value});
    rec["triples"] = triples;
    auto qa = nlohmann::json::array();
    for (const auto& q : s.qa) qa.push_back(qa_to_json(q));
    rec["qa"] = qa;
    out << rec.dump() << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "write to '" + path + "' failed");
}

std::vector<Sample> read_dataset(const std::string& path, const Corpus& corpus) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open dataset '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kIo, "dataset '" + path + "' is empty");
  std::vector<Sample> out;
  try {
    auto header = nlohmann::json::parse(line);
    require(header.value("format", "") == kDatasetFormat && header.value("version", 0) == 1,
            ErrorKind::kIo, "'" + path + "' is not a version-1 unidiff dataset");
    require(header.value("vocab_hash", "") == std::to_string(corpus.vocab().manifest_hash()),
            ErrorKind::kConfiguration, "dataset was written for a different vocabulary");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto rec = nlohmann::json::parse(line);
      Sample s;
      s.seed = rec.at("seed").get<std::uint64_t>();
      s.caption = rec.at("caption_ids").get<std::vector<TokenId>>();
      s.grid.height = rec.at("height").get<int>();
      s.grid.width = rec.at("width").get<int>();
      s.grid.cells = rec.at("cells").get<std::vector<TokenId>>();
      validate_grid(s.grid, corpus.vocab());
      for (const auto& t : rec.at("triples")) s.triples.push_back({t.at(0), t.at(1), t.at(2)});
      for (const auto& q : rec.at("qa")) {
        QAItem item;
        item.kind = parse_question_kind(q.at("kind").get<std::string>());
        item.subject = q.at("subject").get<std::string>();
        item.choices = q.at("choices").get<std::array<std::string, 4>>();
        item.correct_index = q.at("correct_index").get<int>();
        item.question = corpus.question_tokens(item);
        s.qa.push_back(std::move(item));
      }
      s.scene = corpus.parse_caption(s.caption);
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, "malformed dataset '" + path + "': " + e.what());
  }
  return out;
}

}  // namespace unidiff
