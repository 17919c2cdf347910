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

#include "lmf/bbdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "lmf/errors.hpp"
#include "lmf/rng.hpp"

namespace lmf {

using Json = nlohmann::json;

std::string to_string(PermuteMode mode) {
  switch (mode) {
    case PermuteMode::kBbdf:
      return "bbdf";
    case PermuteMode::kAbbdf:
      return "abbdf";
    case PermuteMode::kBalanced:
      return "balanced";
  }
  return "bbdf";
}

PermuteMode parse_permute_mode(const std::string& name) {
  if (name == "bbdf") return PermuteMode::kBbdf;
  if (name == "abbdf") return PermuteMode::kAbbdf;
  if (name == "balanced") return PermuteMode::kBalanced;
  throw DomainError("unknown permutation mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// BBDFTree

BBDFTree::BBDFTree(const RatingMatrix& m, PermuteMode mode_in,
                   double target, std::uint64_t seed_in)
    : mode(mode_in),
      seed(seed_in),
      target_density(target),
      n_rows(m.n_rows()),
      n_cols(m.n_cols()),
      row_labels(m.row_labels()),
      col_labels(m.col_labels()) {
  TreeNode root;
  root.rows.resize(static_cast<std::size_t>(n_rows));
  root.cols.resize(static_cast<std::size_t>(n_cols));
  std::iota(root.rows.begin(), root.rows.end(), 0);
  std::iota(root.cols.begin(), root.cols.end(), 0);
  nodes.push_back(std::move(root));
}

std::vector<int> BBDFTree::leaves() const {
  std::vector<int> out;
  if (nodes.empty()) return out;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    const TreeNode& n = nodes[id];
    if (n.is_leaf()) {
      out.push_back(id);
      continue;
    }
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      stack.push_back(*it);
    }
  }
  return out;
}

std::size_t BBDFTree::dropped_count() const {
  std::size_t total = 0;
  for (const TreeNode& n : nodes) total += n.dropped.size();
  return total;
}

namespace {

void append_order(const BBDFTree& t, int id, std::vector<Index>& rows,
                  std::vector<Index>& cols) {
  const TreeNode& n = t.nodes[id];
  if (n.is_leaf()) {
    rows.insert(rows.end(), n.rows.begin(), n.rows.end());
    cols.insert(cols.end(), n.cols.begin(), n.cols.end());
    return;
  }
  for (int c : n.children) append_order(t, c, rows, cols);
  rows.insert(rows.end(), n.row_border.begin(), n.row_border.end());
  cols.insert(cols.end(), n.col_border.begin(), n.col_border.end());
}

// Elements of `all` not marked in `taken`, preserving order.
std::vector<Index> remainder(const std::vector<Index>& all,
                             const std::vector<char>& taken) {
  std::vector<Index> out;
  for (Index x : all) {
    if (!taken[x]) out.push_back(x);
  }
  return out;
}

}  // namespace

IndexPermutation BBDFTree::permutation() const {
  std::vector<Index> rows, cols;
  append_order(*this, 0, rows, cols);
  return IndexPermutation::from_order(rows, cols);
}

std::vector<int> BBDFTree::split_leaf(
    int id,
    std::vector<std::pair<std::vector<Index>, std::vector<Index>>> parts,
    std::vector<std::pair<Index, Index>> dropped) {
  if (!nodes[id].is_leaf()) throw ShapeError("split_leaf on an internal node");
  std::vector<char> row_taken(static_cast<std::size_t>(n_rows), 0);
  std::vector<char> col_taken(static_cast<std::size_t>(n_cols), 0);
  std::vector<int> ids;
  for (auto& [rows, cols] : parts) {
    std::sort(rows.begin(), rows.end());
    std::sort(cols.begin(), cols.end());
    for (Index r : rows) row_taken[r] = 1;
    for (Index c : cols) col_taken[c] = 1;
    TreeNode child;
    child.rows = std::move(rows);
    child.cols = std::move(cols);
    child.parent = id;
    child.depth = nodes[id].depth + 1;
    ids.push_back(static_cast<int>(nodes.size()));
    nodes.push_back(std::move(child));
  }
  TreeNode& n = nodes[id];
  n.children = ids;
  n.row_border = remainder(n.rows, row_taken);
  n.col_border = remainder(n.cols, col_taken);
  n.dropped = std::move(dropped);
  std::sort(n.dropped.begin(), n.dropped.end());
  return ids;
}

// ---------------------------------------------------------------------------
// TreeIndex

TreeIndex::TreeIndex(const BBDFTree& tree) : tree_(&tree) {
  const std::size_t n = tree.nodes.size();
  row_home_.assign(static_cast<std::size_t>(tree.n_rows), -1);
  col_home_.assign(static_cast<std::size_t>(tree.n_cols), -1);
  tin_.assign(n, 0);
  tout_.assign(n, 0);
  leaves_under_.assign(n, 0);
  leaf_rank_.assign(n, -1);
  for (std::size_t id = 0; id < n; ++id) {
    const TreeNode& node = tree.nodes[id];
    const auto& rs = node.is_leaf() ? node.rows : node.row_border;
    const auto& cs = node.is_leaf() ? node.cols : node.col_border;
    for (Index r : rs) row_home_[r] = static_cast<int>(id);
    for (Index c : cs) col_home_[c] = static_cast<int>(id);
  }
  // Iterative Euler tour.
  int clock = 0;
  std::vector<std::pair<int, std::size_t>> stack = {{0, 0}};
  tin_[0] = clock++;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const TreeNode& node = tree.nodes[id];
    if (node.is_leaf()) {
      leaf_rank_[id] = static_cast<int>(leaf_order_.size());
      leaf_order_.push_back(id);
      leaves_under_[id] = 1;
    }
    if (next < node.children.size()) {
      int child = node.children[next++];
      tin_[child] = clock++;
      stack.emplace_back(child, 0);
    } else {
      tout_[id] = clock++;
      int done = id;
      stack.pop_back();
      if (!stack.empty()) leaves_under_[stack.back().first] += leaves_under_[done];
    }
  }
}

int TreeIndex::coverage(Index i, Index j) const {
  int a = row_home_[i];
  int b = col_home_[j];
  if (a < 0 || b < 0) return 0;
  if (is_ancestor_or_self(a, b)) return leaves_under_[b];
  if (is_ancestor_or_self(b, a)) return leaves_under_[a];
  return 0;
}

std::vector<int> TreeIndex::covering_leaves(Index i, Index j) const {
  int a = row_home_[i];
  int b = col_home_[j];
  int deeper = -1;
  if (a >= 0 && b >= 0) {
    if (is_ancestor_or_self(a, b)) deeper = b;
    else if (is_ancestor_or_self(b, a)) deeper = a;
  }
  std::vector<int> out;
  if (deeper < 0) return out;
  // Leaves of a subtree are contiguous in depth-first order.
  for (int leaf : leaf_order_) {
    if (is_ancestor_or_self(deeper, leaf)) out.push_back(leaf);
  }
  return out;
}

int TreeIndex::lowest_common_ancestor(int a, int b) const {
  const auto& nodes = tree_->nodes;
  while (nodes[a].depth > nodes[b].depth) a = nodes[a].parent;
  while (nodes[b].depth > nodes[a].depth) b = nodes[b].parent;
  while (a != b) {
    a = nodes[a].parent;
    b = nodes[b].parent;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

std::uint64_t node_seed(std::uint64_t seed, int id) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(id) + 1));
}

void check_target(double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    throw DomainError("target density must lie in (0, 1]");
  }
}

// Bipartite graph over the rows and columns of a view that hold at least one
// entry inside it. Idle indices carry no edges, so they are kept out of the
// bisection and placed afterwards.
struct ViewGraph {
  BipartiteGraph graph;
  std::vector<Index> rows;  // graph R node -> global row
  std::vector<Index> cols;  // graph C node -> global column
  std::vector<Index> idle_rows;
  std::vector<Index> idle_cols;

  Index global(Node v) const {
    return graph.is_r(v) ? rows[v] : cols[v - graph.n_r()];
  }
};

ViewGraph view_graph(const SubmatrixView& view, NodeWeighting weighting) {
  const RatingMatrix& m = view.matrix();
  std::vector<std::size_t> col_deg(static_cast<std::size_t>(m.n_cols()), 0);
  std::vector<std::size_t> row_deg(view.rows().size(), 0);
  for (std::size_t r = 0; r < view.rows().size(); ++r) {
    for (const Entry& e : m.row(view.rows()[r])) {
      if (view.has_col(e.col)) {
        ++row_deg[r];
        ++col_deg[e.col];
      }
    }
  }
  ViewGraph out;
  std::vector<Index> row_local(view.rows().size(), -1);
  std::vector<Index> col_local(static_cast<std::size_t>(m.n_cols()), -1);
  for (std::size_t r = 0; r < view.rows().size(); ++r) {
    const Index i = view.rows()[r];
    if (row_deg[r] == 0) {
      out.idle_rows.push_back(i);
    } else {
      row_local[r] = static_cast<Index>(out.rows.size());
      out.rows.push_back(i);
    }
  }
  for (Index j : view.cols()) {
    if (col_deg[j] == 0) {
      out.idle_cols.push_back(j);
    } else {
      col_local[j] = static_cast<Index>(out.cols.size());
      out.cols.push_back(j);
    }
  }
  std::vector<std::pair<Index, Index>> edges;
  for (std::size_t r = 0; r < view.rows().size(); ++r) {
    if (row_local[r] < 0) continue;
    for (const Entry& e : m.row(view.rows()[r])) {
      if (col_local[e.col] >= 0) edges.emplace_back(row_local[r], col_local[e.col]);
    }
  }
  std::vector<int> weights;
  const auto nr = static_cast<double>(out.rows.size());
  const auto nc = static_cast<double>(out.cols.size());
  if (weighting == NodeWeighting::kArea && nr > 0 && nc > 0) {
    // A row spans nc cells and a column nr; scaled so coarse sums stay small.
    constexpr double kScale = 1000.0;
    const int row_w = std::max(1, static_cast<int>(std::lround(kScale * nc / (nr + nc))));
    const int col_w = std::max(1, static_cast<int>(std::lround(kScale * nr / (nr + nc))));
    weights.assign(out.rows.size(), row_w);
    weights.resize(out.rows.size() + out.cols.size(), col_w);
  }
  out.graph = BipartiteGraph(static_cast<Index>(out.rows.size()),
                             static_cast<Index>(out.cols.size()), edges, weights);
  return out;
}

// Idle rows join the side with fewer columns and idle columns the side with
// fewer rows; either choice leaves the zero structure intact and this one
// adds the least block area.
void place_idle(const ViewGraph& vg, std::vector<std::vector<Index>>& rows,
                std::vector<std::vector<Index>>& cols) {
  const int row_side = cols[1].size() < cols[0].size() ? 1 : 0;
  const int col_side = rows[1].size() < rows[0].size() ? 1 : 0;
  rows[row_side].insert(rows[row_side].end(), vg.idle_rows.begin(), vg.idle_rows.end());
  cols[col_side].insert(cols[col_side].end(), vg.idle_cols.begin(), vg.idle_cols.end());
  for (auto& v : rows) std::sort(v.begin(), v.end());
  for (auto& v : cols) std::sort(v.begin(), v.end());
}

// a/b > c/d for non-negative counts and positive areas.
bool ratio_greater(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                   std::uint64_t d) {
  return static_cast<unsigned __int128>(a) * d >
         static_cast<unsigned __int128>(c) * b;
}

using Parts = std::vector<std::pair<std::vector<Index>, std::vector<Index>>>;

Parts parts_of(const std::vector<SubmatrixView>& views) {
  Parts parts;
  for (const SubmatrixView& v : views) parts.emplace_back(v.rows(), v.cols());
  return parts;
}

void order_by_entries(std::vector<SubmatrixView>& views) {
  std::vector<std::size_t> counts;
  std::vector<std::size_t> idx(views.size());
  for (const auto& v : views) counts.push_back(v.count_entries());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return counts[a] > counts[b];
  });
  std::vector<SubmatrixView> sorted;
  for (std::size_t k : idx) sorted.push_back(std::move(views[k]));
  views = std::move(sorted);
}

}  // namespace

// ---------------------------------------------------------------------------
// Basic step

SplitResult basic_bbdf_step(const SubmatrixView& view, std::uint64_t seed,
                            double balance_tol, NodeWeighting weighting) {
  if (view.empty()) throw NoSplitError("cannot split an empty view");
  ViewGraph vg = view_graph(view, weighting);
  const BipartiteGraph& g = vg.graph;
  if (g.n_r() == 0 || g.n_c() == 0) throw NoSplitError("view holds no entries");
  VertexPartition p = gpvs_bisect(g, balance_tol, seed);
#ifdef LMF_CHECK_INVARIANTS
  if (auto why = check_vertex_partition(g, p); !why.empty()) {
    throw std::logic_error("vertex separator invalid: " + why);
  }
#endif
  const RatingMatrix& m = view.matrix();
  std::vector<std::vector<Index>> rows(2), cols(2);
  SplitResult out;
  for (Node v = 0; v < g.n_nodes(); ++v) {
    const int s = p.side[v];
    const bool is_row = g.is_r(v);
    if (s < 0) {
      (is_row ? out.row_border : out.col_border).push_back(vg.global(v));
    } else {
      (is_row ? rows[s] : cols[s]).push_back(vg.global(v));
    }
  }
  place_idle(vg, rows, cols);
  for (int s = 0; s < 2; ++s) {
    if (rows[s].empty() || cols[s].empty()) {
      throw NoSplitError("cannot split: a block would have no rows or columns");
    }
    out.children.emplace_back(m, rows[s], cols[s]);
  }
  order_by_entries(out.children);
  out.pooled_density = avg_density(out.children);
  return out;
}

// ---------------------------------------------------------------------------
// Density improvement

DensityImprovement improve_density(std::span<const SubmatrixView> children,
                                   double target) {
  if (children.empty()) throw DegenerateError("no blocks to improve");
  const RatingMatrix& m = children.front().matrix();
  const std::size_t k = children.size();
  std::vector<int> row_child(static_cast<std::size_t>(m.n_rows()), -1);
  std::vector<int> col_child(static_cast<std::size_t>(m.n_cols()), -1);
  std::vector<std::uint64_t> nrows(k), ncols(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (children[c].empty()) throw DegenerateError("block without rows or columns");
    if (&children[c].matrix() != &m) throw ShapeError("blocks over different matrices");
    for (Index r : children[c].rows()) {
      if (row_child[r] != -1) throw ShapeError("blocks share a row");
      row_child[r] = static_cast<int>(c);
    }
    for (Index j : children[c].cols()) {
      if (col_child[j] != -1) throw ShapeError("blocks share a column");
      col_child[j] = static_cast<int>(c);
    }
    nrows[c] = children[c].rows().size();
    ncols[c] = children[c].cols().size();
  }

  std::vector<std::uint64_t> row_count(row_child.size(), 0);
  std::vector<std::uint64_t> col_count(col_child.size(), 0);
  std::uint64_t total_n = 0, total_a = 0;
  for (std::size_t c = 0; c < k; ++c) {
    total_a += nrows[c] * ncols[c];
    for (Index r : children[c].rows()) {
      for (const Entry& e : m.row(r)) {
        if (col_child[e.col] == static_cast<int>(c)) {
          ++row_count[r];
          ++col_count[e.col];
          ++total_n;
        }
      }
    }
  }
  using Key = std::pair<std::uint64_t, Index>;
  std::vector<std::set<Key>> row_sets(k), col_sets(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (Index r : children[c].rows()) row_sets[c].insert({row_count[r], r});
    for (Index j : children[c].cols()) col_sets[c].insert({col_count[j], j});
  }

  DensityImprovement out;
  auto pooled = [&] {
    return static_cast<double>(total_n) / static_cast<double>(total_a);
  };
  out.trajectory.push_back(pooled());

  while (pooled() < target) {
    // Within a block every row removes the same area, so the sparsest row
    // (and column) of each block are the only candidates worth comparing.
    bool found = false;
    std::size_t best_c = 0;
    Axis best_axis = Axis::kRow;
    Key best_key{};
    std::uint64_t best_n = 0, best_a = 1;
    for (std::size_t c = 0; c < k; ++c) {
      for (Axis axis : {Axis::kRow, Axis::kCol}) {
        const bool is_row = axis == Axis::kRow;
        if ((is_row ? nrows[c] : ncols[c]) <= 1) continue;
        const Key key = *(is_row ? row_sets[c] : col_sets[c]).begin();
        const std::uint64_t n = total_n - key.first;
        const std::uint64_t a = total_a - (is_row ? ncols[c] : nrows[c]);
        if (!found || ratio_greater(n, a, best_n, best_a)) {
          found = true;
          best_c = c;
          best_axis = axis;
          best_key = key;
          best_n = n;
          best_a = a;
        }
      }
    }
    if (!found || !ratio_greater(best_n, best_a, total_n, total_a)) {
      throw DegenerateBlockError(
          "no single row or column promotion raises pooled block density");
    }

    const Index x = best_key.second;
    const int c = static_cast<int>(best_c);
    if (best_axis == Axis::kRow) {
      for (const Entry& e : m.row(x)) {
        if (col_child[e.col] != c) continue;
        col_sets[c].erase({col_count[e.col], e.col});
        --col_count[e.col];
        col_sets[c].insert({col_count[e.col], e.col});
      }
      row_sets[c].erase(best_key);
      row_child[x] = -1;
      --nrows[c];
    } else {
      for (std::uint32_t pos : m.col_entries(x)) {
        const Index r = m.entries()[pos].row;
        if (row_child[r] != c) continue;
        row_sets[c].erase({row_count[r], r});
        --row_count[r];
        row_sets[c].insert({row_count[r], r});
      }
      col_sets[c].erase(best_key);
      col_child[x] = -1;
      --ncols[c];
    }
    total_n = best_n;
    total_a = best_a;
    out.promoted.push_back({best_axis, x});
    out.trajectory.push_back(pooled());
  }

  for (std::size_t c = 0; c < k; ++c) {
    std::vector<Index> rows, cols;
    for (Index r : children[c].rows()) {
      if (row_child[r] == static_cast<int>(c)) rows.push_back(r);
    }
    for (Index j : children[c].cols()) {
      if (col_child[j] == static_cast<int>(c)) cols.push_back(j);
    }
    out.children.emplace_back(m, std::move(rows), std::move(cols));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact and approximate recursion

BBDFTree bbdf_permute(const RatingMatrix& m, double target_density,
                      std::uint64_t seed, const PermuteOptions& options) {
  check_target(target_density);
  BBDFTree tree(m, PermuteMode::kBbdf, target_density, seed);
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    SubmatrixView view(m, tree.nodes[id].rows, tree.nodes[id].cols);
    if (view.empty()) continue;
    const double here = density(view);
    if (here >= target_density) continue;
    SplitResult step;
    try {
      step = basic_bbdf_step(view, node_seed(seed, id), options.balance_tol);
    } catch (const NoSplitError&) {
      continue;
    }
    if (!(step.pooled_density > here)) continue;
    std::vector<int> ids = tree.split_leaf(id, parts_of(step.children));
    for (auto it = ids.rbegin(); it != ids.rend(); ++it) stack.push_back(*it);
  }
  return tree;
}

BBDFTree abbdf_permute(const RatingMatrix& m, double target_density,
                       std::uint64_t seed, const PermuteOptions& options) {
  check_target(target_density);
  BBDFTree tree(m, PermuteMode::kAbbdf, target_density, seed);
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    SubmatrixView view(m, tree.nodes[id].rows, tree.nodes[id].cols);
    if (view.empty() || density(view) >= target_density) continue;

    ViewGraph vg = view_graph(view, NodeWeighting::kUnit);
    const BipartiteGraph& g = vg.graph;
    if (g.n_r() == 0 || g.n_c() == 0) continue;
    EdgePartition cut;
    try {
      cut = gpes_bisect(g, options.balance_tol, node_seed(seed, id));
    } catch (const NoSplitError&) {
      continue;
    }
#ifdef LMF_CHECK_INVARIANTS
    if (auto why = check_edge_partition(g, cut); !why.empty()) {
      throw std::logic_error("edge separator invalid: " + why);
    }
#endif
    std::vector<std::vector<Index>> rows(2), cols(2);
    for (Node v = 0; v < g.n_nodes(); ++v) {
      (g.is_r(v) ? rows : cols)[cut.side[v]].push_back(vg.global(v));
    }
    place_idle(vg, rows, cols);
    // A side holding only rows or only columns cannot form a block; its
    // indices join the border.
    std::vector<SubmatrixView> children;
    for (int s = 0; s < 2; ++s) {
      if (!rows[s].empty() && !cols[s].empty()) {
        children.emplace_back(m, rows[s], cols[s]);
      }
    }
    if (children.size() < 2) continue;

    DensityImprovement improved;
    try {
      improved = improve_density(children, target_density);
    } catch (const DegenerateBlockError&) {
      continue;
    }
    std::vector<SubmatrixView>& kept = improved.children;
    std::vector<int> row_block(static_cast<std::size_t>(m.n_rows()), -1);
    std::vector<int> col_block(static_cast<std::size_t>(m.n_cols()), -1);
    for (std::size_t c = 0; c < kept.size(); ++c) {
      for (Index r : kept[c].rows()) row_block[r] = static_cast<int>(c);
      for (Index j : kept[c].cols()) col_block[j] = static_cast<int>(c);
    }
    std::vector<std::pair<Index, Index>> dropped;
    for (auto [a, b] : cut.cut_edges) {
      const Node rn = g.is_r(a) ? a : b;
      const Node cn = g.is_r(a) ? b : a;
      const Index r = vg.global(rn);
      const Index c = vg.global(cn);
      if (row_block[r] >= 0 && col_block[c] >= 0 && row_block[r] != col_block[c]) {
        dropped.emplace_back(r, c);
      }
    }
    order_by_entries(kept);
    std::vector<int> ids = tree.split_leaf(id, parts_of(kept), std::move(dropped));
    for (auto it = ids.rbegin(); it != ids.rend(); ++it) stack.push_back(*it);
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Balanced growth

namespace {

// Row and column sets of an assembled block together with masks for fast
// membership tests during counting.
struct BlockCounter {
  const RatingMatrix& m;
  std::vector<char> col_mask;

  explicit BlockCounter(const RatingMatrix& matrix)
      : m(matrix), col_mask(static_cast<std::size_t>(matrix.n_cols()), 0) {}

  std::uint64_t count(const std::vector<Index>& rows,
                      const std::vector<Index>& cols) {
    for (Index j : cols) col_mask[j] = 1;
    std::uint64_t n = 0;
    for (Index r : rows) {
      for (const Entry& e : m.row(r)) n += col_mask[e.col];
    }
    for (Index j : cols) col_mask[j] = 0;
    return n;
  }
};

void ancestor_borders(const BBDFTree& t, int id, std::vector<Index>& rows,
                      std::vector<Index>& cols) {
  std::vector<int> chain;
  for (int p = t.nodes[id].parent; p >= 0; p = t.nodes[p].parent) chain.push_back(p);
  for (int id_up : chain) {
    const TreeNode& n = t.nodes[id_up];
    rows.insert(rows.end(), n.row_border.begin(), n.row_border.end());
    cols.insert(cols.end(), n.col_border.begin(), n.col_border.end());
  }
}

struct Trial {
  bool ok = false;
  Parts parts;
  std::uint64_t n_after = 0;  // entries of the two new assembled blocks
  std::uint64_t s_after = 0;  // their total area
};

}  // namespace

BalancedResult balanced_permute(const RatingMatrix& m,
                                double target_assembled_density,
                                std::uint64_t seed,
                                const PermuteOptions& options) {
  check_target(target_assembled_density);
  BalancedResult out;
  BBDFTree& tree = out.tree;
  tree = BBDFTree(m, PermuteMode::kBalanced, target_assembled_density, seed);
  BlockCounter counter(m);

  // Per-leaf assembled entry count and area.
  std::map<int, std::pair<std::uint64_t, std::uint64_t>> stats;
  stats[0] = {m.nnz(), static_cast<std::uint64_t>(m.n_rows()) * m.n_cols()};
  std::uint64_t total_n = m.nnz();
  std::uint64_t total_s = stats[0].second;
  if (total_s == 0) return out;
  std::map<int, Trial> cache;

  auto run_trial = [&](int leaf) {
    Trial t;
    const TreeNode& node = tree.nodes[leaf];
    SubmatrixView view(m, node.rows, node.cols);
    SplitResult step;
    try {
      step = basic_bbdf_step(view, node_seed(seed, leaf), options.balance_tol,
                             NodeWeighting::kArea);
    } catch (const NoSplitError&) {
      return t;
    }
    std::vector<Index> anc_rows = step.row_border, anc_cols = step.col_border;
    ancestor_borders(tree, leaf, anc_rows, anc_cols);
    for (const SubmatrixView& child : step.children) {
      std::vector<Index> rows = child.rows(), cols = child.cols();
      rows.insert(rows.end(), anc_rows.begin(), anc_rows.end());
      cols.insert(cols.end(), anc_cols.begin(), anc_cols.end());
      t.n_after += counter.count(rows, cols);
      t.s_after += static_cast<std::uint64_t>(rows.size()) * cols.size();
    }
    t.parts = parts_of(step.children);
    t.ok = true;
    return t;
  };

  while (static_cast<double>(total_n) <
         target_assembled_density * static_cast<double>(total_s)) {
    std::vector<int> leaves = tree.leaves();
    if (options.max_blocks > 0 &&
        static_cast<int>(leaves.size()) >= options.max_blocks) {
      break;
    }
    std::stable_sort(leaves.begin(), leaves.end(), [&](int a, int b) {
      const auto area = [&](int id) {
        return static_cast<std::uint64_t>(tree.nodes[id].rows.size()) *
               tree.nodes[id].cols.size();
      };
      if (area(a) != area(b)) return area(a) > area(b);
      return a < b;
    });
    int accepted = -1;
    for (std::size_t rank = 0; rank < leaves.size(); ++rank) {
      const int leaf = leaves[rank];
      auto it = cache.find(leaf);
      if (it == cache.end()) it = cache.emplace(leaf, run_trial(leaf)).first;
      const Trial& t = it->second;
      if (!t.ok) continue;
      const auto [n_old, s_old] = stats[leaf];
      const std::uint64_t n_new = total_n - n_old + t.n_after;
      const std::uint64_t s_new = total_s - s_old + t.s_after;
      if (!ratio_greater(n_new, s_new, total_n, total_s)) continue;

      Parts parts = t.parts;
      std::vector<int> ids = tree.split_leaf(leaf, std::move(parts));
      stats.erase(leaf);
      cache.erase(leaf);
      for (int id : ids) {
        std::vector<Index> rows = tree.nodes[id].rows, cols = tree.nodes[id].cols;
        ancestor_borders(tree, id, rows, cols);
        stats[id] = {counter.count(rows, cols),
                     static_cast<std::uint64_t>(rows.size()) * cols.size()};
      }
      total_n = n_new;
      total_s = s_new;
      accepted = static_cast<int>(rank);
      break;
    }
    out.log.first_choice.push_back(accepted == 0);
    out.log.accepted_rank.push_back(accepted);
    if (accepted < 0) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constructive form from communities

BBDFTree community_permute(const RatingMatrix& m,
                           const std::vector<std::vector<Node>>& communities,
                           CommunityLayout layout) {
  const Node n_nodes = m.n_rows() + m.n_cols();
  const std::size_t k = communities.size();
  if (k == 0) throw DomainError("at least one community is required");
  std::vector<std::vector<char>> member(k, std::vector<char>(n_nodes, 0));
  std::vector<int> memberships(static_cast<std::size_t>(n_nodes), 0);
  for (std::size_t c = 0; c < k; ++c) {
    if (communities[c].empty()) throw DomainError("community is empty");
    for (Node v : communities[c]) {
      if (v < 0 || v >= n_nodes) throw ShapeError("community node out of range");
      if (!member[c][v]) ++memberships[v];
      member[c][v] = 1;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    bool exclusive = false;
    for (Node v : communities[c]) exclusive |= memberships[v] == 1;
    if (!exclusive) {
      throw DomainError("community " + std::to_string(c) +
                        " has no node of its own");
    }
  }

  BBDFTree tree(m, PermuteMode::kAbbdf, 1.0, 0);
  const Index nr = m.n_rows();
  auto split = [&](const std::vector<char>& in, std::vector<Index>& rows,
                   std::vector<Index>& cols) {
    for (Node v = 0; v < n_nodes; ++v) {
      if (!in[v]) continue;
      if (v < nr) rows.push_back(v);
      else cols.push_back(v - nr);
    }
  };

  if (layout == CommunityLayout::kFlat && k > 1) {
    // One child per community's exclusive nodes; everything else is border.
    std::vector<int> owner(static_cast<std::size_t>(n_nodes), -1);
    Parts parts(k);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<char> own(n_nodes, 0);
      for (Node v : communities[c]) {
        if (memberships[v] == 1) {
          own[v] = 1;
          owner[v] = static_cast<int>(c);
        }
      }
      split(own, parts[c].first, parts[c].second);
    }
    std::vector<std::pair<Index, Index>> dropped;
    for (const Entry& e : m.entries()) {
      const int a = owner[e.row], b = owner[nr + e.col];
      if (a >= 0 && b >= 0 && a != b) dropped.emplace_back(e.row, e.col);
    }
    tree.split_leaf(0, std::move(parts), std::move(dropped));
    return tree;
  }

  int current = 0;
  for (std::size_t t = 0; t < k; ++t) {
    if (t + 1 == k) break;  // the last community is the current leaf
    // Shared part of community t with every later community.
    std::vector<char> first(n_nodes, 0), rest(n_nodes, 0);
    for (Node v = 0; v < n_nodes; ++v) {
      bool in_later = false;
      for (std::size_t c = t + 1; c < k; ++c) in_later |= member[c][v] != 0;
      const bool in_first = member[t][v] != 0;
      first[v] = in_first && !in_later;
      rest[v] = in_later && !in_first;
    }
    for (std::size_t c = t + 1; c < k; ++c) {
      for (Node v = 0; v < n_nodes; ++v) member[c][v] = member[c][v] && rest[v];
    }
    Parts parts(2);
    split(first, parts[0].first, parts[0].second);
    split(rest, parts[1].first, parts[1].second);
    std::vector<std::pair<Index, Index>> dropped;
    for (const Entry& e : m.entries()) {
      const Node cn = nr + e.col;
      if ((first[e.row] && rest[cn]) || (rest[e.row] && first[cn])) {
        dropped.emplace_back(e.row, e.col);
      }
    }
    std::vector<int> ids = tree.split_leaf(current, std::move(parts), std::move(dropped));
    current = ids[1];
  }
  if (k == 1) {
    // Uncovered nodes still go to a border.
    std::vector<char> in(member[0]);
    Parts parts(1);
    split(in, parts[0].first, parts[0].second);
    if (parts[0].first.size() != static_cast<std::size_t>(m.n_rows()) ||
        parts[0].second.size() != static_cast<std::size_t>(m.n_cols())) {
      tree.split_leaf(0, std::move(parts));
    }
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Assembly

std::vector<AssembledBlock> assemble_blocks(const BBDFTree& tree,
                                            const RatingMatrix& m) {
  if (m.n_rows() != tree.n_rows || m.n_cols() != tree.n_cols) {
    throw ShapeError("tree and matrix dimensions differ");
  }
  std::unordered_set<std::uint64_t> dropped;
  for (const TreeNode& n : tree.nodes) {
    for (auto [r, c] : n.dropped) {
      dropped.insert(static_cast<std::uint64_t>(r) << 32 | static_cast<std::uint32_t>(c));
    }
  }
  std::vector<AssembledBlock> blocks;
  for (int leaf : tree.leaves()) {
    AssembledBlock b;
    b.leaf = leaf;
    b.rows = tree.nodes[leaf].rows;
    b.cols = tree.nodes[leaf].cols;
    ancestor_borders(tree, leaf, b.rows, b.cols);
    b.local = m.submatrix(b.rows, b.cols);
    if (!dropped.empty()) {
      std::vector<std::size_t> keep;
      const auto entries = b.local.entries();
      for (std::size_t p = 0; p < entries.size(); ++p) {
        const std::uint64_t key =
            static_cast<std::uint64_t>(b.rows[entries[p].row]) << 32 |
            static_cast<std::uint32_t>(b.cols[entries[p].col]);
        if (!dropped.count(key)) keep.push_back(p);
      }
      if (keep.size() != entries.size()) b.local = b.local.select_entries(keep);
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

double assembled_density(const std::vector<AssembledBlock>& blocks) {
  std::uint64_t n = 0, s = 0;
  for (const auto& b : blocks) {
    n += b.local.nnz();
    s += static_cast<std::uint64_t>(b.rows.size()) * b.cols.size();
  }
  if (s == 0) throw DegenerateError("assembled blocks have no area");
  return static_cast<double>(n) / static_cast<double>(s);
}

// ---------------------------------------------------------------------------
// Validation

EntryAccounting account_entries(const BBDFTree& tree, const RatingMatrix& m) {
  TreeIndex index(tree);
  std::unordered_set<std::uint64_t> dropped;
  for (const TreeNode& n : tree.nodes) {
    for (auto [r, c] : n.dropped) {
      dropped.insert(static_cast<std::uint64_t>(r) << 32 | static_cast<std::uint32_t>(c));
    }
  }
  EntryAccounting acc;
  for (const Entry& e : m.entries()) {
    const std::uint64_t key =
        static_cast<std::uint64_t>(e.row) << 32 | static_cast<std::uint32_t>(e.col);
    const int a = index.row_home(e.row);
    const int b = index.col_home(e.col);
    if (dropped.count(key)) {
      ++acc.dropped;
    } else if (a == b && tree.nodes[a].is_leaf()) {
      ++acc.in_leaves;
    } else if (!tree.nodes[a].is_leaf() || !tree.nodes[b].is_leaf()) {
      ++acc.on_borders;
    }
  }
  return acc;
}

std::string validate_tree(const BBDFTree& tree, const RatingMatrix& m) {
  if (tree.nodes.empty()) return "tree has no nodes";
  if (m.n_rows() != tree.n_rows || m.n_cols() != tree.n_cols) {
    return "tree and matrix dimensions differ";
  }
  const TreeNode& root = tree.root();
  if (root.rows.size() != static_cast<std::size_t>(m.n_rows()) ||
      root.cols.size() != static_cast<std::size_t>(m.n_cols())) {
    return "root does not govern every row and column";
  }
  std::vector<int> owner_r(static_cast<std::size_t>(m.n_rows()));
  std::vector<int> owner_c(static_cast<std::size_t>(m.n_cols()));
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    const TreeNode& n = tree.nodes[id];
    if (n.is_leaf()) {
      if (!n.row_border.empty() || !n.col_border.empty() || !n.dropped.empty()) {
        return "leaf " + std::to_string(id) + " has a border or dropped entries";
      }
      continue;
    }
    // Children rows plus border must partition the node rows; same for cols.
    std::fill(owner_r.begin(), owner_r.end(), 0);
    std::fill(owner_c.begin(), owner_c.end(), 0);
    for (Index r : n.rows) owner_r[r] = 1;
    for (Index c : n.cols) owner_c[c] = 1;
    auto claim = [](std::vector<int>& owner, const std::vector<Index>& xs) {
      for (Index x : xs) {
        if (owner[x] != 1) return false;
        owner[x] = 2;
      }
      return true;
    };
    for (int child : n.children) {
      if (tree.nodes[child].parent != static_cast<int>(id)) {
        return "child " + std::to_string(child) + " has the wrong parent";
      }
      if (!claim(owner_r, tree.nodes[child].rows) ||
          !claim(owner_c, tree.nodes[child].cols)) {
        return "children of node " + std::to_string(id) + " overlap or escape it";
      }
    }
    if (!claim(owner_r, n.row_border) || !claim(owner_c, n.col_border)) {
      return "border of node " + std::to_string(id) + " overlaps its children";
    }
    for (Index r : n.rows) {
      if (owner_r[r] != 2) return "row " + std::to_string(r) + " unassigned";
    }
    for (Index c : n.cols) {
      if (owner_c[c] != 2) return "column " + std::to_string(c) + " unassigned";
    }
  }

  TreeIndex index(tree);
  const bool approximate = tree.mode == PermuteMode::kAbbdf;
  std::map<std::pair<Index, Index>, int> dropped_at;
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    for (const auto& d : tree.nodes[id].dropped) {
      if (!approximate) return "exact tree lists dropped entries";
      if (!dropped_at.emplace(d, static_cast<int>(id)).second) {
        return "entry dropped twice";
      }
    }
  }
  std::size_t violations = 0;
  for (const Entry& e : m.entries()) {
    const int a = index.row_home(e.row);
    const int b = index.col_home(e.col);
    const bool nested = index.is_ancestor_or_self(a, b) || index.is_ancestor_or_self(b, a);
    auto it = dropped_at.find({e.row, e.col});
    if (nested) {
      if (it != dropped_at.end()) return "dropped entry respects the block structure";
      continue;
    }
    ++violations;
    if (!approximate) {
      return "entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
             ") joins two different blocks";
    }
    if (it == dropped_at.end()) {
      return "entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
             ") violates the block structure but is not dropped";
    }
    if (it->second != index.lowest_common_ancestor(a, b)) {
      return "entry dropped at the wrong node";
    }
  }
  if (violations != dropped_at.size()) return "dropped list contains a non-entry";

  EntryAccounting acc = account_entries(tree, m);
  if (acc.in_leaves + acc.on_borders + acc.dropped != m.nnz()) {
    return "entry accounting does not conserve the entry count";
  }
  return {};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json node_to_json(const BBDFTree& t, int id) {
  const TreeNode& n = t.nodes[id];
  Json j;
  j["rows"] = n.rows;
  j["cols"] = n.cols;
  j["row_border"] = n.row_border;
  j["col_border"] = n.col_border;
  Json dropped = Json::array();
  for (auto [r, c] : n.dropped) dropped.push_back({r, c});
  j["dropped"] = std::move(dropped);
  Json children = Json::array();
  for (int c : n.children) children.push_back(node_to_json(t, c));
  j["children"] = std::move(children);
  return j;
}

void node_from_json(BBDFTree& t, const Json& j, int parent, int depth) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  {
    TreeNode& n = t.nodes.back();
    n.rows = j.at("rows").get<std::vector<Index>>();
    n.cols = j.at("cols").get<std::vector<Index>>();
    n.row_border = j.at("row_border").get<std::vector<Index>>();
    n.col_border = j.at("col_border").get<std::vector<Index>>();
    for (const auto& d : j.at("dropped")) {
      n.dropped.emplace_back(d.at(0).get<Index>(), d.at(1).get<Index>());
    }
    n.parent = parent;
    n.depth = depth;
  }
  for (const auto& child : j.at("children")) {
    const int child_id = static_cast<int>(t.nodes.size());
    t.nodes[id].children.push_back(child_id);
    node_from_json(t, child, id, depth + 1);
  }
}

void check_indices(const std::vector<Index>& xs, Index limit) {
  for (Index x : xs) {
    if (x < 0 || x >= limit) throw ShapeError("tree index out of range");
  }
}

}  // namespace

void write_tree_json(std::ostream& out, const BBDFTree& tree) {
  Json j;
  j["format"] = "lmf-bbdf-tree";
  j["version"] = 1;
  j["mode"] = to_string(tree.mode);
  j["seed"] = tree.seed;
  j["target_density"] = tree.target_density;
  j["n_rows"] = tree.n_rows;
  j["n_cols"] = tree.n_cols;
  j["row_labels"] = tree.row_labels;
  j["col_labels"] = tree.col_labels;
  j["root"] = node_to_json(tree, 0);
  out << j.dump() << '\n';
}

BBDFTree read_tree_json(std::istream& in) {
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("tree JSON: ") + e.what(), 0);
  }
  try {
    BBDFTree t;
    t.mode = parse_permute_mode(j.at("mode").get<std::string>());
    t.seed = j.at("seed").get<std::uint64_t>();
    t.target_density = j.at("target_density").get<double>();
    t.n_rows = j.at("n_rows").get<Index>();
    t.n_cols = j.at("n_cols").get<Index>();
    t.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    t.col_labels = j.at("col_labels").get<std::vector<std::string>>();
    node_from_json(t, j.at("root"), -1, 0);
    for (const TreeNode& n : t.nodes) {
      check_indices(n.rows, t.n_rows);
      check_indices(n.row_border, t.n_rows);
      check_indices(n.cols, t.n_cols);
      check_indices(n.col_border, t.n_cols);
    }
    return t;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("tree JSON: ") + e.what(), 0);
  }
}

void save_tree(const std::string& path, const BBDFTree& tree) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kInput, "cannot write " + path);
  write_tree_json(out, tree);
}

BBDFTree load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open tree file: " + path);
  return read_tree_json(in);
}

}  // namespace lmf
