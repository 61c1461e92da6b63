// Copyright 2026 The unidiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "unidiff/vocab.hpp"

namespace unidiff {

// Grid payload: {height, width, cells: [token ids], palette: [hex per image id]}.
nlohmann::ordered_json grid_to_json(const GridImage& grid, const Vocabulary& vocab);
GridImage grid_from_json(const nlohmann::json& j, const Vocabulary& vocab);

void save_grid(const std::string& path, const GridImage& grid, const Vocabulary& vocab);
GridImage load_grid(const std::string& path, const Vocabulary& vocab);

// Inclusive rectangle r0,c0 .. r1,c1.
struct Rect {
  int r0 = 0, c0 = 0, r1 = 0, c1 = 0;
};

// Parses "r0,c0,r1,c1" with several rectangles separated by ';'.
std::vector<Rect> parse_rects(std::string_view text);
std::vector<Rect> rects_from_json(const nlohmann::json& j);
nlohmann::json rects_to_json(const std::vector<Rect>& rects);

// Union of the rectangles as ascending row-major cell indices. Throws
// kParameter for an empty union or a rectangle outside the grid.
std::vector<int> region_cells(const std::vector<Rect>& rects, int height, int width);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace unidiff
