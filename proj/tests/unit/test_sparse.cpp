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

#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "lmf/errors.hpp"
#include "lmf/partition.hpp"
#include "lmf/sparse.hpp"

using namespace lmf;
using lmf::testing::from_cells;

namespace {

RatingMatrix parse(const std::string& text) {
  std::istringstream in(text);
  return parse_ratings(in);
}

// 9x9 matrix whose lower-right 5x5 block (rows/cols 5..9) holds 9 entries,
// row 8 has 2 of them and column 5 has 5 entries overall.
RatingMatrix shaded_block_matrix() {
  return from_cells(9, 9, {{5, 5}, {6, 5}, {7, 6}, {8, 7}, {8, 9}, {9, 8},
                           {5, 6}, {6, 9}, {9, 9}, {1, 5}, {2, 5}, {3, 5},
                           {1, 1}, {2, 2}, {4, 3}, {3, 4}});
}

std::vector<Index> range(Index lo, Index hi) {
  std::vector<Index> v(static_cast<std::size_t>(hi - lo));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

}  // namespace

TEST_CASE("parse: single record gives a 1x1 matrix of density 1") {
  RatingMatrix m = parse("a b 5\n");
  CHECK(m.n_rows() == 1);
  CHECK(m.n_cols() == 1);
  REQUIRE(m.nnz() == 1);
  CHECK(m.entries()[0].value == 5.0);
  CHECK(density(SubmatrixView::full(m)) == 1.0);
}

TEST_CASE("parse: duplicate pair is rejected") {
  CHECK_THROWS_AS(parse("a b 5\na b 5\n"), DuplicateEntryError);
}

TEST_CASE("parse: malformed line reports its line number") {
  try {
    parse("# header\nu1 i1 4\nu2 i2\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse("u1 i1 four\n"), ParseError);
}

TEST_CASE("parse: empty input is degenerate") {
  CHECK_THROWS_AS(parse(""), DegenerateError);
  CHECK_THROWS_AS(parse("# only a comment\n\n"), DegenerateError);
}

TEST_CASE("parse: ids are assigned in first-appearance order") {
  RatingMatrix m = parse("u9 i3 1 100\nu2 i3 2\nu9 i1 3\n");
  CHECK(m.row_labels() == std::vector<std::string>{"u9", "u2"});
  CHECK(m.col_labels() == std::vector<std::string>{"i3", "i1"});
  CHECK(m.find(0, 1).value() == 3.0);
  CHECK_FALSE(m.find(1, 1).has_value());
}

TEST_CASE("parse: csv dialect and write round trip") {
  std::istringstream in("x,y,2.5\nx,z,4\n");
  RatingMatrix m = parse_ratings(in, RatingLogFormat::kCsv);
  CHECK(m.nnz() == 2);
  std::ostringstream out;
  write_ratings(out, m);
  RatingMatrix back = parse(out.str());
  CHECK(back == m);
  CHECK(back.row_labels() == m.row_labels());
}

TEST_CASE("construction: row and column indices cover the same entries") {
  Rng rng(7);
  RatingMatrix m = lmf::testing::random_sparse(rng, 20, 15, 0.2);
  std::size_t via_rows = 0, via_cols = 0;
  for (Index i = 0; i < m.n_rows(); ++i) via_rows += m.row(i).size();
  for (Index j = 0; j < m.n_cols(); ++j) {
    for (auto pos : m.col_entries(j)) {
      CHECK(m.entries()[pos].col == j);
      ++via_cols;
    }
  }
  CHECK(via_rows == m.nnz());
  CHECK(via_cols == m.nnz());
  CHECK_THROWS_AS(RatingMatrix(2, 2, {{2, 0, 1.0}}), ShapeError);
  CHECK_THROWS_AS(RatingMatrix(2, 2, {{1, 1, 1.0}, {1, 1, 2.0}}),
                  DuplicateEntryError);
}

TEST_CASE("density: shaded 5x5 block with 9 entries") {
  RatingMatrix m = shaded_block_matrix();
  SubmatrixView shaded(m, range(4, 9), range(4, 9));
  CHECK(shaded.count_entries() == 9);
  CHECK(density(shaded) == 9.0 / 25.0);
}

TEST_CASE("density: empty-content view is 0, empty view throws") {
  RatingMatrix m = shaded_block_matrix();
  CHECK(density(SubmatrixView(m, {3}, {0})) == 0.0);
  CHECK_THROWS_AS(density(SubmatrixView(m, {}, {0})), DegenerateError);
  CHECK_THROWS_AS(SubmatrixView(m, {0, 0}, {1}), ShapeError);
  CHECK_THROWS_AS(SubmatrixView(m, {9}, {1}), ShapeError);
}

TEST_CASE("avg_density pools counts and areas") {
  RatingMatrix m = from_cells(4, 4, {{1, 1}, {1, 2}, {2, 1}, {2, 2}, {3, 3}});
  SubmatrixView full_block(m, {0, 1}, {0, 1});
  SubmatrixView empty_block(m, {2, 3}, {0, 1});
  std::vector<SubmatrixView> two = {full_block, empty_block};
  CHECK(avg_density(two) == 0.5);

  std::vector<SubmatrixView> one = {full_block};
  CHECK(avg_density(one) == density(full_block));

  // Densities 1.0 and 0.0 with areas 1 and 3: pooled 0.25, not 0.5.
  SubmatrixView tiny(m, {0}, {0});
  SubmatrixView wide(m, {3}, {0, 1, 3});
  std::vector<SubmatrixView> mixed = {tiny, wide};
  CHECK(avg_density(mixed) == 0.25);

  CHECK_THROWS_AS(avg_density(std::span<const SubmatrixView>{}),
                  DegenerateError);
}

TEST_CASE("avg_density over a covering grid equals full density exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    Index nr = 5 + static_cast<Index>(rng.uniform(30));
    Index nc = 5 + static_cast<Index>(rng.uniform(30));
    RatingMatrix m = lmf::testing::random_sparse(rng, nr, nc, 0.15);
    std::vector<Index> rows = range(0, nr), cols = range(0, nc);
    shuffle(rows, rng);
    shuffle(cols, rng);
    Index rcut = 1 + static_cast<Index>(rng.uniform(nr - 1));
    Index ccut = 1 + static_cast<Index>(rng.uniform(nc - 1));
    std::vector<Index> r0(rows.begin(), rows.begin() + rcut);
    std::vector<Index> r1(rows.begin() + rcut, rows.end());
    std::vector<Index> c0(cols.begin(), cols.begin() + ccut);
    std::vector<Index> c1(cols.begin() + ccut, cols.end());
    std::vector<SubmatrixView> grid = {
        SubmatrixView(m, r0, c0), SubmatrixView(m, r0, c1),
        SubmatrixView(m, r1, c0), SubmatrixView(m, r1, c1)};
    CHECK(avg_density(grid) == density(SubmatrixView::full(m)));
  }
}

TEST_CASE("restricted_density: column and row restricted to a block") {
  RatingMatrix m = shaded_block_matrix();
  SubmatrixView column_context(m, range(0, 9), {4});
  CHECK(restricted_density({Axis::kCol, 4}, column_context) == 5.0 / 9.0);

  SubmatrixView shaded(m, range(4, 9), range(4, 9));
  CHECK(restricted_density({Axis::kRow, 7}, shaded) == 2.0 / 5.0);

  SubmatrixView top_left(m, range(0, 4), range(0, 4));
  CHECK(restricted_density({Axis::kRow, 3}, SubmatrixView(m, {3}, {0})) == 0.0);
  CHECK_THROWS_AS(restricted_density({Axis::kRow, 8}, top_left), ShapeError);
  CHECK_THROWS_AS(restricted_density({Axis::kCol, 8}, top_left), ShapeError);
}

TEST_CASE("apply_permutation: identity, swap and mismatch") {
  RatingMatrix m(2, 2, {{0, 0, 3.0}});
  CHECK(apply_permutation(m, IndexPermutation::identity(2, 2)) == m);

  IndexPermutation swap{{1, 0}, {0, 1}};
  RatingMatrix s = apply_permutation(m, swap);
  REQUIRE(s.nnz() == 1);
  CHECK(s.entries()[0] == Entry{1, 0, 3.0});

  CHECK_THROWS_AS(apply_permutation(m, IndexPermutation::identity(3, 2)),
                  ShapeError);
  CHECK_THROWS_AS(apply_permutation(m, IndexPermutation{{0, 0}, {0, 1}}),
                  ShapeError);
}

TEST_CASE("apply_permutation: round trip and density invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Index nr = 1 + static_cast<Index>(rng.uniform(25));
    Index nc = 1 + static_cast<Index>(rng.uniform(25));
    RatingMatrix m = lmf::testing::random_sparse(rng, nr, nc, 0.2);
    std::vector<Index> ro = range(0, nr), co = range(0, nc);
    shuffle(ro, rng);
    shuffle(co, rng);
    IndexPermutation p = IndexPermutation::from_order(ro, co);
    REQUIRE(p.is_valid());
    RatingMatrix pm = apply_permutation(m, p);
    CHECK(density(SubmatrixView::full(pm)) == density(SubmatrixView::full(m)));
    // Row placed at position 0 is ro[0].
    CHECK(pm.row_labels()[0] == m.row_labels()[ro[0]]);
    RatingMatrix back = apply_permutation(pm, p.inverse());
    CHECK(back == m);
    CHECK(back.row_labels() == m.row_labels());
    CHECK(back.col_labels() == m.col_labels());
  }
}

TEST_CASE("submatrix keeps labels and local order") {
  RatingMatrix m = from_cells(3, 3, {{1, 1}, {2, 3}, {3, 2}});
  std::vector<Index> rows = {2, 1}, cols = {1, 2};
  RatingMatrix s = m.submatrix(rows, cols);
  CHECK(s.n_rows() == 2);
  CHECK(s.row_labels() == std::vector<std::string>{"3", "2"});
  CHECK(s.find(0, 0).has_value());  // (3,2)
  CHECK(s.find(1, 1).has_value());  // (2,3)
  CHECK(s.nnz() == 2);
}

TEST_CASE("to_bipartite: node and edge counts") {
  RatingMatrix one(1, 1, {{0, 0, 4.0}});
  BipartiteGraph g = to_bipartite(one);
  CHECK(g.n_nodes() == 2);
  CHECK(g.n_edges() == 1);

  RatingMatrix gap = from_cells(3, 2, {{1, 1}, {3, 2}});
  BipartiteGraph h = to_bipartite(gap);
  CHECK(h.neighbors(h.r_node(1)).empty());
  CHECK(h.neighbors(h.c_node(0)).size() == 1);
}

TEST_CASE("MovieLens-100K shape and density") {
  if (!lmf::testing::have_movielens_100k()) {
    MESSAGE("MovieLens-100K not present; run scripts/fetch_movielens.py");
    return;
  }
  RatingMatrix m = load_ratings(lmf::testing::movielens_100k_path());
  CHECK(m.n_rows() == 943);
  CHECK(m.n_cols() == 1682);
  CHECK(m.nnz() == 100000);
  CHECK(std::abs(density(SubmatrixView::full(m)) - 0.0630) <= 1e-4);
  BipartiteGraph g = to_bipartite(m);
  CHECK(g.n_nodes() == 2625);
  CHECK(g.n_edges() == 100000);
}
