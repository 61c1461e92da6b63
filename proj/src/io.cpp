// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "unidiff/io.hpp"

#include <fstream>
#include <sstream>

#include "unidiff/corpus.hpp"
#include "unidiff/error.hpp"

namespace unidiff {

nlohmann::ordered_json grid_to_json(const GridImage& grid, const Vocabulary& vocab) {
  validate_grid(grid, vocab);
  nlohmann::ordered_json j;
  j["height"] = grid.height;
  j["width"] = grid.width;
  j["cells"] = grid.cells;
  auto palette = nlohmann::json::array();
  const auto& hex = Lexicon::color_hex();
  for (int i = 0; i < vocab.image_count(); ++i) {
    palette.push_back(i < static_cast<int>(hex.size()) ? hex[static_cast<std::size_t>(i)] : std::string("#000000"));
  }
  j["palette"] = palette;
  return j;
}

GridImage grid_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  GridImage grid;
  try {
    grid.height = j.at("height").get<int>();
    grid.width = j.at("width").get<int>();
    grid.cells = j.at("cells").get<std::vector<TokenId>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidGrid, std::string("malformed grid payload: ") + e.what());
  }
  validate_grid(grid, vocab);
  return grid;
}

void save_grid(const std::string& path, const GridImage& grid, const Vocabulary& vocab) {
  write_file(path, grid_to_json(grid, vocab).dump(2) + "\n");
}

GridImage load_grid(const std::string& path, const Vocabulary& vocab) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, path + ": " + e.what());
  }
  return grid_from_json(j, vocab);
}

std::vector<Rect> parse_rects(std::string_view text) {
  std::vector<Rect> out;
  std::stringstream all{std::string(text)};
  std::string item;
  while (std::getline(all, item, ';')) {
    if (item.empty()) continue;
    Rect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(item);
    in >> r.r0 >> c1 >> r.c0 >> c2 >> r.r1 >> c3 >> r.c1;
    require(in && c1 == ',' && c2 == ',' && c3 == ',' && (in >> std::ws).eof(), ErrorKind::kParameter,
            "region '" + item + "' is not r0,c0,r1,c1");
    out.push_back(r);
  }
  return out;
}

std::vector<Rect> rects_from_json(const nlohmann::json& j) {
  require(j.is_array(), ErrorKind::kParameter, "regions must be an array of {r0, c0, r1, c1}");
  std::vector<Rect> out;
  try {
    for (const auto& e : j) out.push_back({e.at("r0").get<int>(), e.at("c0").get<int>(), e.at("r1").get<int>(),
                                           e.at("c1").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParameter, std::string("malformed region: ") + e.what());
  }
  return out;
}

nlohmann::json rects_to_json(const std::vector<Rect>& rects) {
  auto arr = nlohmann::json::array();
  for (const Rect& r : rects) arr.push_back({{"r0", r.r0}, {"c0", r.c0}, {"r1", r.r1}, {"c1", r.c1}});
  return arr;
}

std::vector<int> region_cells(const std::vector<Rect>& rects, int height, int width) {
  std::vector<std::uint8_t> in(static_cast<std::size_t>(height) * width, 0);
  for (const Rect& r : rects) {
    require(r.r0 >= 0 && r.c0 >= 0 && r.r0 <= r.r1 && r.c0 <= r.c1 && r.r1 < height && r.c1 < width,
            ErrorKind::kParameter,
            "region " + std::to_string(r.r0) + "," + std::to_string(r.c0) + "," + std::to_string(r.r1) + "," +
                std::to_string(r.c1) + " is outside a " + std::to_string(height) + "x" + std::to_string(width) +
                " grid");
    for (int row = r.r0; row <= r.r1; ++row) {
      for (int col = r.c0; col <= r.c1; ++col) in[static_cast<std::size_t>(row) * width + col] = 1;
    }
  }
  std::vector<int> cells;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i]) cells.push_back(static_cast<int>(i));
  }
  require(!cells.empty(), ErrorKind::kParameter, "region is empty");
  return cells;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  out << contents;
  require(static_cast<bool>(out), ErrorKind::kIo, "write failed for " + path);
}

}  // namespace unidiff
