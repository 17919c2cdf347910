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

// Multilevel bisection of user-item bipartite graphs.
//
// Edge separators come from a classic multilevel scheme: heavy-edge matching
// down to a few hundred nodes, greedy region growing on the coarsest graph,
// then boundary Fiduccia-Mattheyses refinement while projecting back up.
// Vertex separators are derived from an edge separator by taking a minimum
// vertex cover of the cut edges (Konig's theorem) and returning redundant
// cover nodes to the side they can join without reconnecting the parts.

#ifndef LMF_PARTITION_HPP_
#define LMF_PARTITION_HPP_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lmf/sparse.hpp"

namespace lmf {

using Node = std::int32_t;

// Rows are nodes [0, n_r), columns are nodes [n_r, n_r + n_c).
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  // `edges` holds (row, col) pairs; duplicates are rejected.
  BipartiteGraph(Index n_r, Index n_c,
                 std::span<const std::pair<Index, Index>> edges,
                 std::vector<int> node_weights = {});

  Index n_r() const { return n_r_; }
  Index n_c() const { return n_c_; }
  Node n_nodes() const { return n_r_ + n_c_; }
  std::size_t n_edges() const { return adj_.size() / 2; }

  bool is_r(Node v) const { return v < n_r_; }
  Node r_node(Index row) const { return row; }
  Node c_node(Index col) const { return n_r_ + col; }

  std::span<const Node> neighbors(Node v) const {
    return {adj_.data() + xadj_[v], adj_.data() + xadj_[v + 1]};
  }
  int weight(Node v) const { return weights_[v]; }
  long total_weight() const;

 private:
  Index n_r_ = 0;
  Index n_c_ = 0;
  std::vector<std::size_t> xadj_{0};
  std::vector<Node> adj_;
  std::vector<int> weights_;
};

// One R-node per row, one C-node per column, one edge per observed entry.
BipartiteGraph to_bipartite(const RatingMatrix& m);

struct EdgePartition {
  std::vector<std::vector<Node>> parts;          // ascending node ids
  std::vector<std::pair<Node, Node>> cut_edges;  // (smaller, larger) id
  std::vector<int> side;                         // part id per node
};

struct VertexPartition {
  std::vector<std::vector<Node>> parts;  // ascending node ids
  std::vector<Node> separator;           // ascending node ids, may be empty
  std::vector<int> side;                 // part id per node, -1 = separator
};

struct PartitionOptions {
  double balance_tol = 0.2;
  std::uint64_t seed = 0;
  int coarsen_to = 200;
  int initial_tries = 8;
  int refine_passes = 10;
};

// Two-way edge separator. Part weights differ by at most balance_tol of the
// total weight (relaxed to the heaviest single node when the fraction cannot
// be met). Throws NoSplitError for graphs with fewer than two nodes.
EdgePartition gpes_bisect(const BipartiteGraph& g,
                          const PartitionOptions& options);
EdgePartition gpes_bisect(const BipartiteGraph& g, double balance_tol,
                          std::uint64_t seed);

// Two-way vertex separator derived from gpes_bisect. Throws NoSplitError when
// every candidate separator leaves a part empty.
VertexPartition gpvs_bisect(const BipartiteGraph& g,
                            const PartitionOptions& options);
VertexPartition gpvs_bisect(const BipartiteGraph& g, double balance_tol,
                            std::uint64_t seed);

// Soundness checks: the partition covers every node exactly once, parts are
// non-empty and no surviving edge joins two parts. Returns an empty string
// when valid, otherwise a description of the first violation.
std::string check_edge_partition(const BipartiteGraph& g,
                                 const EdgePartition& p);
std::string check_vertex_partition(const BipartiteGraph& g,
                                   const VertexPartition& p);

// Connected components of the graph restricted to nodes with keep[v] != 0.
// Returns a component id per node (-1 for dropped nodes) and the count.
std::pair<std::vector<int>, int> connected_components(
    const BipartiteGraph& g, std::span<const char> keep);

}  // namespace lmf

#endif  // LMF_PARTITION_HPP_
