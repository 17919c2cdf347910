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

// Recursive bordered-block-diagonal reordering.
//
// A BBDFTree records, for every node, the rows and columns it governs, the
// subset promoted to that node's border, and its children (the diagonal
// blocks). Leaves are the final diagonal blocks. Reading the tree depth-first
// with children before borders gives the row and column permutation.
//
// Three builders share the tree type:
//   bbdf_permute      exact form; a split is kept only if it raises the pooled
//                     density of the children above the node's density.
//   abbdf_permute     approximate form; edge bisection, entries on the cut are
//                     dropped, sparse vectors are promoted to the border.
//   balanced_permute  grows the tree one leaf split at a time, gated on the
//                     pooled density of the assembled blocks.

#ifndef LMF_BBDF_HPP_
#define LMF_BBDF_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmf/partition.hpp"
#include "lmf/sparse.hpp"

namespace lmf {

enum class PermuteMode { kBbdf, kAbbdf, kBalanced };

std::string to_string(PermuteMode mode);
PermuteMode parse_permute_mode(const std::string& name);

struct TreeNode {
  std::vector<Index> rows;  // every row governed here, children + border
  std::vector<Index> cols;
  std::vector<Index> row_border;
  std::vector<Index> col_border;
  std::vector<int> children;  // node ids, descending entry count
  std::vector<std::pair<Index, Index>> dropped;  // (row, col), approximate only
  int parent = -1;
  int depth = 0;

  bool is_leaf() const { return children.empty(); }
};

class BBDFTree {
 public:
  BBDFTree() = default;
  // Single-leaf tree over the whole matrix.
  BBDFTree(const RatingMatrix& m, PermuteMode mode, double target_density,
           std::uint64_t seed);

  PermuteMode mode = PermuteMode::kBbdf;
  std::uint64_t seed = 0;
  double target_density = 0.0;
  Index n_rows = 0;
  Index n_cols = 0;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& root() const { return nodes.front(); }
  const TreeNode& node(int id) const { return nodes[id]; }

  // Leaf ids in depth-first order (children in stored order).
  std::vector<int> leaves() const;
  std::size_t leaf_count() const { return leaves().size(); }
  std::size_t dropped_count() const;

  // Depth-first order with each node's border placed after its children.
  IndexPermutation permutation() const;

  // Adds `children` under the leaf `id`; the remaining indices become its
  // border. Returns the new node ids.
  std::vector<int> split_leaf(int id,
                              std::vector<std::pair<std::vector<Index>,
                                                    std::vector<Index>>> parts,
                              std::vector<std::pair<Index, Index>> dropped = {});
};

// Covering structure derived from a tree: for every row and column, the node
// where it lives (a leaf, or the internal node whose border holds it).
class TreeIndex {
 public:
  explicit TreeIndex(const BBDFTree& tree);

  int row_home(Index i) const { return row_home_[i]; }
  int col_home(Index j) const { return col_home_[j]; }
  bool is_ancestor_or_self(int a, int b) const {
    return tin_[a] <= tin_[b] && tout_[b] <= tout_[a];
  }
  // Number of assembled blocks containing both row i and column j.
  int coverage(Index i, Index j) const;
  // Leaf ids (depth-first) whose assembled block contains both i and j.
  std::vector<int> covering_leaves(Index i, Index j) const;
  // Deepest node holding both indices in its subtree.
  int lowest_common_ancestor(int a, int b) const;
  int leaves_under(int node) const { return leaves_under_[node]; }

 private:
  const BBDFTree* tree_;
  std::vector<int> row_home_;
  std::vector<int> col_home_;
  std::vector<int> tin_;
  std::vector<int> tout_;
  std::vector<int> leaves_under_;
  std::vector<int> leaf_rank_;  // depth-first rank of each leaf, -1 otherwise
  std::vector<int> leaf_order_;
};

// ---------------------------------------------------------------------------
// Building blocks

struct SplitResult {
  std::vector<SubmatrixView> children;  // descending entry count
  std::vector<Index> row_border;
  std::vector<Index> col_border;
  double pooled_density = 0.0;
};

// How the bisection balances the two sides: by node count, or by the cells
// each node spans (a row weighs the view's column count, a column its row
// count), which balances block area rather than index counts.
enum class NodeWeighting { kUnit, kArea };

// One vertex-separator bisection of a view. Throws NoSplitError if the
// partitioner cannot split or a child would lack rows or columns.
SplitResult basic_bbdf_step(const SubmatrixView& view, std::uint64_t seed,
                            double balance_tol = 0.2,
                            NodeWeighting weighting = NodeWeighting::kUnit);

struct DensityImprovement {
  std::vector<SubmatrixView> children;
  std::vector<VectorRef> promoted;  // in promotion order
  std::vector<double> trajectory;   // pooled density before and after each step
};

// Greedily promotes the row or column whose removal maximizes pooled child
// density until the pooled density reaches `target`. A removal may not empty
// a child. Throws DegenerateBlockError if no allowed removal increases the
// pooled density while still below target.
DensityImprovement improve_density(std::span<const SubmatrixView> children,
                                   double target);

struct PermuteOptions {
  double balance_tol = 0.2;
  int max_blocks = 0;  // balanced mode only; 0 = unlimited
};

BBDFTree bbdf_permute(const RatingMatrix& m, double target_density,
                      std::uint64_t seed, const PermuteOptions& options = {});
BBDFTree abbdf_permute(const RatingMatrix& m, double target_density,
                       std::uint64_t seed, const PermuteOptions& options = {});

// One entry per scan round: whether the largest leaf was the accepted split.
// A round in which no leaf improves the density is recorded as a miss.
struct FchrLog {
  std::vector<bool> first_choice;
  std::vector<int> accepted_rank;  // position tried, -1 when none accepted
};

struct BalancedResult {
  BBDFTree tree;
  FchrLog log;
};

// Splits the largest leaf whose bisection raises the pooled density of the
// assembled blocks, until the target is met or no leaf helps. Bisections
// balance area (NodeWeighting::kArea).
BalancedResult balanced_permute(const RatingMatrix& m,
                                double target_assembled_density,
                                std::uint64_t seed,
                                const PermuteOptions& options = {});

// Constructive approximate form for an overlapping community assignment over
// graph nodes (rows are [0, n_rows), columns follow). Each community needs at
// least one node it does not share. Nodes in no community go to the root
// border.
//
// kNested peels one community per level: the part of community t shared with
// later ones becomes that level's border. Entries from community t's own
// nodes to nodes shared only among later communities are dropped too.
// kFlat puts every shared node on the root border with one child per
// community, so the dropped set is exactly the entries joining nodes owned
// by different communities.
enum class CommunityLayout { kFlat, kNested };

BBDFTree community_permute(const RatingMatrix& m,
                           const std::vector<std::vector<Node>>& communities,
                           CommunityLayout layout = CommunityLayout::kFlat);

// ---------------------------------------------------------------------------
// Assembly

struct AssembledBlock {
  int leaf = -1;
  std::vector<Index> rows;  // leaf rows, then ancestor borders nearest first
  std::vector<Index> cols;
  RatingMatrix local;       // induced entries in local indices, dropped excluded
};

std::vector<AssembledBlock> assemble_blocks(const BBDFTree& tree,
                                            const RatingMatrix& m);

// Pooled density over assembled blocks.
double assembled_density(const std::vector<AssembledBlock>& blocks);

// ---------------------------------------------------------------------------
// Validation and persistence

// Returns an empty string when the tree satisfies the structural invariants
// for its mode (partitioning of every node, zero structure or complete
// dropped lists, conservation of entries); otherwise the first violation.
std::string validate_tree(const BBDFTree& tree, const RatingMatrix& m);

struct EntryAccounting {
  std::size_t in_leaves = 0;  // both indices live in the same leaf
  std::size_t on_borders = 0; // at least one index is a border, not dropped
  std::size_t dropped = 0;
};
EntryAccounting account_entries(const BBDFTree& tree, const RatingMatrix& m);

void write_tree_json(std::ostream& out, const BBDFTree& tree);
BBDFTree read_tree_json(std::istream& in);
void save_tree(const std::string& path, const BBDFTree& tree);
BBDFTree load_tree(const std::string& path);

}  // namespace lmf

#endif  // LMF_BBDF_HPP_
