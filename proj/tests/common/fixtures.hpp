// Copyright 2026 The LMF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared matrices and helpers for the test binaries.

#ifndef LMF_TESTS_FIXTURES_HPP_
#define LMF_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lmf/rng.hpp"
#include "lmf/sparse.hpp"

namespace lmf::testing {

// Builds a matrix from 1-based (row, col) cells, all with value 1. Labels are
// the 1-based numbers so that tests can speak in the same coordinates.
inline RatingMatrix from_cells(Index n_rows, Index n_cols,
                               const std::vector<std::pair<int, int>>& cells,
                               double value = 1.0) {
  std::vector<Entry> entries;
  for (auto [r, c] : cells) entries.push_back({r - 1, c - 1, value});
  std::vector<std::string> rl, cl;
  for (Index i = 1; i <= n_rows; ++i) rl.push_back(std::to_string(i));
  for (Index j = 1; j <= n_cols; ++j) cl.push_back(std::to_string(j));
  return RatingMatrix(n_rows, n_cols, std::move(entries), rl, cl);
}

inline void add_block(std::vector<std::pair<int, int>>& cells,
                      const std::vector<int>& rows,
                      const std::vector<int>& cols) {
  for (int r : rows) {
    for (int c : cols) cells.emplace_back(r, c);
  }
}

// 11x12 matrix with two communities bridged by row 4, row 9 and column 7:
//   community A: rows {1,2,3,5,6} x cols {1,2,3,4,8,9} (sparse, connected)
//   community B: rows {7,8,10,11} x cols {5,6,10,11,12} (complete)
// Row 4 touches A via cols 3, 8 and B via col 10; row 9 touches A via cols 1,
// 3 and B via cols 5, 6; column 7 touches A via rows 1, 2 and B via row 8.
// The minimum vertex separator is {R4, R9, C7}.
inline RatingMatrix bridged_two_community() {
  std::vector<std::pair<int, int>> cells = {
      {1, 1}, {1, 3}, {2, 1}, {2, 3}, {3, 1}, {3, 4}, {1, 2},
      {5, 2}, {2, 9}, {6, 9}, {5, 4}, {5, 8}, {6, 4}, {6, 8},
      {4, 3}, {4, 8}, {4, 10}, {9, 1}, {9, 3}, {9, 5}, {9, 6},
      {1, 7}, {2, 7}, {8, 7}};
  add_block(cells, {7, 8, 10, 11}, {5, 6, 10, 11, 12});
  return from_cells(11, 12, cells);
}

// Same layout tuned for the edge-separator path: community A is complete and
// absorbs row 4 and column 7 densely, so the only balanced two-edge cut is
// {(8,7), (4,10)}; row 9 hangs off B by a single entry (9,5) and is the
// first vector worth promoting to the border.
inline RatingMatrix scatter_two_community() {
  std::vector<std::pair<int, int>> cells;
  add_block(cells, {1, 2, 3, 5, 6}, {1, 2, 3, 4, 8, 9});
  add_block(cells, {4}, {1, 2, 3, 4, 7, 8, 9, 10});
  add_block(cells, {1, 2, 3, 5, 6, 8}, {7});
  add_block(cells, {7, 8, 10, 11}, {5, 6, 10, 11, 12});
  cells.emplace_back(9, 5);
  return from_cells(11, 12, cells);
}

// Random sparse matrix with exactly round(density * area) distinct cells.
inline RatingMatrix random_sparse(Rng& rng, Index n_rows, Index n_cols,
                                  double density, double lo = 1.0,
                                  double hi = 5.0) {
  const std::size_t area = static_cast<std::size_t>(n_rows) * n_cols;
  std::size_t target = static_cast<std::size_t>(density * area + 0.5);
  target = std::max<std::size_t>(1, std::min(target, area));
  std::vector<std::size_t> cells(area);
  for (std::size_t k = 0; k < area; ++k) cells[k] = k;
  shuffle(cells, rng);
  cells.resize(target);
  std::vector<Entry> entries;
  for (std::size_t k : cells) {
    double v = lo + std::floor(rng.unit() * (hi - lo + 1.0));
    entries.push_back({static_cast<Index>(k / n_cols),
                       static_cast<Index>(k % n_cols), v});
  }
  return RatingMatrix(n_rows, n_cols, std::move(entries));
}

inline std::string movielens_100k_path() {
#ifdef LMF_DATA_DIR
  return std::string(LMF_DATA_DIR) + "/ml-100k/u.data";
#else
  return "data/ml-100k/u.data";
#endif
}

inline bool have_movielens_100k() {
  return std::filesystem::exists(movielens_100k_path());
}

}  // namespace lmf::testing

#endif  // LMF_TESTS_FIXTURES_HPP_
