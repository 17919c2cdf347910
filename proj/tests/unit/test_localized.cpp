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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "fixtures.hpp"
#include "lmf/errors.hpp"
#include "lmf/localized.hpp"

using namespace lmf;
using lmf::testing::add_block;
using lmf::testing::from_cells;

namespace {

FactorizerSpec quick_spec(Algorithm a = Algorithm::kSvdAls, int rank = 2) {
  FactorizerSpec s = FactorizerSpec::defaults(a);
  s.rank = rank;
  s.max_iters = 30;
  return s;
}

int position(const std::vector<Index>& v, Index x) {
  auto it = std::find(v.begin(), v.end(), x);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

// Damped biases computed entry by entry, columns first.
double bias_oracle(const RatingMatrix& m, Index i, Index j, double damping) {
  double mu = 0.0;
  for (const Entry& e : m.entries()) mu += e.value;
  mu /= static_cast<double>(m.nnz());
  auto col_bias = [&](Index c) {
    double s = 0.0;
    int n = 0;
    for (const Entry& e : m.entries()) {
      if (e.col == c) {
        s += e.value - mu;
        ++n;
      }
    }
    return s / (n + damping);
  };
  double s = 0.0;
  int n = 0;
  for (const Entry& e : m.entries()) {
    if (e.row == i) {
      s += e.value - mu - col_bias(e.col);
      ++n;
    }
  }
  return mu + s / (n + damping) + col_bias(j);
}

// Mean over blocks holding both indices with a training entry in the block,
// found by scanning block membership lists.
struct Oracle {
  int members = 0;
  int votes = 0;
  double value = 0.0;
};

Oracle brute_force(const LMFModel& model, const RatingMatrix& train, Index i, Index j) {
  Oracle o;
  double sum = 0.0;
  for (const BlockModel& b : model.blocks()) {
    const int li = position(b.rows, i), lj = position(b.cols, j);
    if (li < 0 || lj < 0) continue;
    ++o.members;
    bool row_seen = false, col_seen = false;
    for (const Entry& e : train.entries()) {
      const int ei = position(b.rows, e.row), ej = position(b.cols, e.col);
      if (ei < 0 || ej < 0) continue;
      bool dropped = false;
      for (const TreeNode& n : model.tree().nodes) {
        for (auto [r, c] : n.dropped) dropped |= (r == e.row && c == e.col);
      }
      if (dropped) continue;
      row_seen |= e.row == i;
      col_seen |= e.col == j;
    }
    if (!row_seen || !col_seen) continue;
    sum += predict_entry(b.factors, li, lj);
    ++o.votes;
  }
  const double raw = o.votes > 0 ? sum / o.votes : bias_oracle(train, i, j, 25.0);
  o.value = clamp_rating(raw, model.rating_lo(), model.rating_hi());
  return o;
}

// Rows {1,2} x cols {1,2} and rows {3,4} x cols {3,4} as leaves, row 5 and
// column 5 on the root border. Every row and column touches the border.
RatingMatrix bordered_pair() {
  std::vector<std::pair<int, int>> cells;
  add_block(cells, {1, 2}, {1, 2});
  add_block(cells, {3, 4}, {3, 4});
  add_block(cells, {5}, {1, 2, 3, 4, 5});
  add_block(cells, {1, 2, 3, 4}, {5});
  RatingMatrix base = from_cells(5, 5, cells);
  std::vector<Entry> e(base.entries().begin(), base.entries().end());
  for (std::size_t k = 0; k < e.size(); ++k) e[k].value = 1.0 + static_cast<double>(k % 5);
  return RatingMatrix(5, 5, e, base.row_labels(), base.col_labels());
}

BBDFTree bordered_pair_tree(const RatingMatrix& m) {
  BBDFTree t(m, PermuteMode::kBbdf, 0.0, 0);
  t.split_leaf(0, {{{0, 1}, {0, 1}}, {{2, 3}, {2, 3}}});
  return t;
}

}  // namespace

TEST_CASE("damped bias model matches a direct computation") {
  Rng rng(1);
  RatingMatrix m = lmf::testing::random_sparse(rng, 8, 7, 0.4);
  BiasModel b = BiasModel::fit(m, 25.0);
  for (Index i = 0; i < m.n_rows(); ++i) {
    for (Index j = 0; j < m.n_cols(); ++j) {
      CHECK(b.predict(i, j) == doctest::Approx(bias_oracle(m, i, j, 25.0)).epsilon(1e-12));
    }
  }
  // One entry: mean 4, biases shrink to zero.
  BiasModel one = BiasModel::fit(RatingMatrix(1, 1, {{0, 0, 4.0}}));
  CHECK(one.predict(0, 0) == 4.0);
}

TEST_CASE("single-leaf model predicts like plain factorization") {
  Rng rng(2);
  RatingMatrix m = lmf::testing::random_sparse(rng, 15, 12, 0.4);
  FactorizerSpec s = quick_spec(Algorithm::kSvdAls, 3);
  LMFModel model = lmf_fit(BBDFTree(m, PermuteMode::kBbdf, 0.0, 0), m, s);
  REQUIRE(model.blocks().size() == 1);
  FactorPair plain = factorize(m, s);
  for (Index i = 0; i < m.n_rows(); ++i) {
    for (Index j = 0; j < m.n_cols(); ++j) {
      if (m.row_degree(i) == 0 || m.col_degree(j) == 0) continue;
      CHECK(model.predict(i, j) == clamp_rating(predict_entry(plain, i, j), 1.0, 5.0));
      CHECK(model.coverage_count(i, j) == 1);
    }
  }
  CHECK_THROWS_AS(model.predict(15, 0), ShapeError);
  CHECK_THROWS_AS(model.coverage_count(0, -1), ShapeError);
}

TEST_CASE("coverage and averaging on a bordered pair") {
  RatingMatrix m = bordered_pair();
  BBDFTree tree = bordered_pair_tree(m);
  REQUIRE(validate_tree(tree, m).empty());
  LMFModel model = lmf_fit(tree, m, quick_spec());
  REQUIRE(model.blocks().size() == 2);
  CHECK(model.coverage_count(0, 0) == 1);  // leaf interior
  CHECK(model.coverage_count(4, 4) == 2);  // border x border
  CHECK(model.coverage_count(0, 2) == 0);  // across leaves
  CHECK(model.coverage_count(0, 4) == 1);  // leaf row x border column
  // The border cell averages both blocks.
  const BlockModel& a = model.blocks()[0];
  const BlockModel& b = model.blocks()[1];
  const double pa = predict_entry(a.factors, position(a.rows, 4), position(a.cols, 4));
  const double pb = predict_entry(b.factors, position(b.rows, 4), position(b.cols, 4));
  CHECK(model.block_mean(4, 4) == doctest::Approx(0.5 * (pa + pb)).epsilon(1e-15));
  CHECK(model.predict_cell(4, 4).votes == 2);
  // A cross-leaf cell uses the bias model.
  CellPrediction cross = model.predict_cell(0, 2);
  CHECK(cross.votes == 0);
  CHECK(cross.value == doctest::Approx(clamp_rating(bias_oracle(m, 0, 2, 25.0), 1, 5)));
  CHECK_THROWS_AS(model.block_mean(0, 2), DegenerateError);
}

TEST_CASE("predictions equal the brute-force mean over covering blocks") {
  Rng rng(7);
  int cases = 0, voted = 0, fell_back = 0;
  for (int t = 0; t < 12; ++t) {
    RatingMatrix m = lmf::testing::random_sparse(rng, 14 + t % 5, 12 + t % 4, 0.22);
    BBDFTree tree = t % 3 == 0 ? abbdf_permute(m, 0.5, t)
                               : balanced_permute(m, 0.45, t).tree;
    LMFOptions options;
    options.threads = 1 + t % 3;
    LMFModel model = lmf_fit(tree, m, quick_spec(Algorithm::kSvdAls, 2), options);
    for (Index i = 0; i < m.n_rows(); ++i) {
      for (Index j = 0; j < m.n_cols(); ++j) {
        const Oracle o = brute_force(model, m, i, j);
        const CellPrediction c = model.predict_cell(i, j);
        CHECK(model.coverage_count(i, j) == o.members);
        CHECK(static_cast<int>(model.covering_blocks(i, j).size()) == o.members);
        CHECK(c.votes == o.votes);
        CHECK(c.value == doctest::Approx(o.value).epsilon(1e-12));
        ++cases;
        (c.votes > 0 ? voted : fell_back) += 1;
      }
    }
  }
  CHECK(cases > 2000);
  CHECK(voted > 0);
  CHECK(fell_back > 0);
}

TEST_CASE("exact block-diagonal low-rank matrices are reconstructed") {
  Rng rng(19);
  for (int t = 0; t < 5; ++t) {
    // Two fully observed rank-2 blocks with positive values.
    std::vector<Entry> e;
    const Index sizes[2][2] = {{5, 4}, {4, 6}};
    Index r0 = 0, c0 = 0;
    std::vector<std::pair<std::vector<Index>, std::vector<Index>>> parts;
    for (const auto& sz : sizes) {
      FactorMatrix u(sz[0], 2), v(sz[1], 2);
      for (Index i = 0; i < sz[0]; ++i) u.row(i) << 1.0 + rng.unit(), rng.unit();
      for (Index j = 0; j < sz[1]; ++j) v.row(j) << 1.0 + rng.unit(), rng.unit();
      std::vector<Index> rows, cols;
      for (Index i = 0; i < sz[0]; ++i) rows.push_back(r0 + i);
      for (Index j = 0; j < sz[1]; ++j) cols.push_back(c0 + j);
      for (Index i = 0; i < sz[0]; ++i) {
        for (Index j = 0; j < sz[1]; ++j) e.push_back({r0 + i, c0 + j, u.row(i).dot(v.row(j))});
      }
      parts.emplace_back(rows, cols);
      r0 += sz[0];
      c0 += sz[1];
    }
    RatingMatrix m(r0, c0, e);
    BBDFTree tree(m, PermuteMode::kBbdf, 0.0, 0);
    tree.split_leaf(0, parts);
    FactorizerSpec s = quick_spec(Algorithm::kSvdAls, 2);
    s.lambda = 0;
    s.max_iters = 500;
    s.convergence_tol = 0;
    LMFModel model = lmf_fit(tree, m, s);
    double worst = 0.0;
    for (const Entry& x : m.entries()) {
      worst = std::max(worst, std::abs(model.block_mean(x.row, x.col) - x.value));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("thread count does not change the model") {
  Rng rng(23);
  RatingMatrix m = lmf::testing::random_sparse(rng, 40, 35, 0.12);
  BBDFTree tree = balanced_permute(m, 0.3, 5).tree;
  REQUIRE(tree.leaf_count() >= 3);
  for (Algorithm a : {Algorithm::kSvdAls, Algorithm::kPmfSgd, Algorithm::kMmmfFast}) {
    LMFOptions one, many;
    many.threads = 4;
    LMFModel x = lmf_fit(tree, m, quick_spec(a, 3), one);
    LMFModel y = lmf_fit(tree, m, quick_spec(a, 3), many);
    REQUIRE(x.blocks().size() == y.blocks().size());
    for (std::size_t b = 0; b < x.blocks().size(); ++b) {
      CHECK(x.blocks()[b].factors.U == y.blocks()[b].factors.U);
      CHECK(x.blocks()[b].factors.V == y.blocks()[b].factors.V);
      CHECK(x.blocks()[b].factors.thresholds == y.blocks()[b].factors.thresholds);
    }
  }
}

TEST_CASE("saved models reload and factor files do not depend on threads") {
  namespace fs = std::filesystem;
  Rng rng(29);
  RatingMatrix m = lmf::testing::random_sparse(rng, 30, 26, 0.15);
  BBDFTree tree = balanced_permute(m, 0.3, 1).tree;
  LMFOptions one, many;
  many.threads = 3;
  LMFModel x = lmf_fit(tree, m, quick_spec(), one);
  LMFModel y = lmf_fit(tree, m, quick_spec(), many);
  const fs::path dir = fs::temp_directory_path() / "lmf_localized_test";
  fs::remove_all(dir);
  save_model((dir / "one").string(), x);
  save_model((dir / "many").string(), y);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "one")) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    CHECK_MESSAGE(slurp(entry.path()) == slurp(dir / "many" / name), name);
    ++compared;
  }
  CHECK(compared >= 3);

  LMFModel back = load_model((dir / "one").string());
  CHECK(back.blocks().size() == x.blocks().size());
  CHECK(back.rating_lo() == x.rating_lo());
  CHECK(back.spec().rank == x.spec().rank);
  for (Index i = 0; i < m.n_rows(); ++i) {
    for (Index j = 0; j < m.n_cols(); ++j) {
      CHECK(back.predict(i, j) == x.predict(i, j));
    }
  }
  CHECK_THROWS_AS(load_model((dir / "missing").string()), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("factor-product mode predicts cross-leaf cells from block factors") {
  RatingMatrix m = bordered_pair();
  LMFOptions options;
  options.cross_block = CrossBlockMode::kFactorProduct;
  LMFModel model = lmf_fit(bordered_pair_tree(m), m, quick_spec(), options);
  const BlockModel& a = model.blocks()[0];
  const BlockModel& b = model.blocks()[1];
  // Row 0 lives only in block a, column 2 only in block b.
  const int ia = position(a.rows, 0), jb = position(b.cols, 2);
  const double expected = a.factors.U.row(ia).dot(b.factors.V.row(jb));
  CHECK(model.predict_cell(0, 2).votes == 0);
  CHECK(model.predict(0, 2) == doctest::Approx(clamp_rating(expected, 1, 5)));
  CHECK(parse_cross_block_mode("factor_product") == CrossBlockMode::kFactorProduct);
  CHECK_THROWS_AS(parse_cross_block_mode("nearest"), DomainError);
}

TEST_CASE("block failures name the block") {
  std::vector<Entry> e = {{0, 0, 1.0}, {1, 1, -2.0}};
  RatingMatrix m(2, 2, e);
  BBDFTree tree(m, PermuteMode::kBbdf, 0.0, 0);
  tree.split_leaf(0, {{{0}, {0}}, {{1}, {1}}});
  try {
    lmf_fit(tree, m, quick_spec(Algorithm::kNmf));
    FAIL("expected a block error");
  } catch (const BlockError& err) {
    CHECK(err.kind() == ErrorKind::kInput);
    CHECK(std::string(err.what()).find("block") != std::string::npos);
  }
  LMFOptions bad;
  bad.threads = 0;
  CHECK_THROWS_AS(lmf_fit(tree, m, quick_spec(), bad), DomainError);
}
