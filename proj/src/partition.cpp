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

#include "lmf/partition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <tuple>

#include "lmf/errors.hpp"
#include "lmf/rng.hpp"

namespace lmf {

BipartiteGraph::BipartiteGraph(Index n_r, Index n_c,
                               std::span<const std::pair<Index, Index>> edges,
                               std::vector<int> node_weights)
    : n_r_(n_r), n_c_(n_c), weights_(std::move(node_weights)) {
  const Node n = n_r + n_c;
  if (weights_.empty()) weights_.assign(static_cast<std::size_t>(n), 1);
  if (weights_.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("node weight count does not match node count");
  }
  for (int w : weights_) {
    if (w <= 0) throw ShapeError("node weights must be positive");
  }
  std::vector<std::size_t> degree(static_cast<std::size_t>(n) + 1, 0);
  for (auto [r, c] : edges) {
    if (r < 0 || r >= n_r || c < 0 || c >= n_c) {
      throw ShapeError("edge endpoint out of range");
    }
    ++degree[r + 1];
    ++degree[n_r + c + 1];
  }
  xadj_.assign(degree.size(), 0);
  std::partial_sum(degree.begin(), degree.end(), xadj_.begin());
  adj_.resize(xadj_.back());
  std::vector<std::size_t> fill(xadj_.begin(), xadj_.end() - 1);
  for (auto [r, c] : edges) {
    adj_[fill[r]++] = n_r + c;
    adj_[fill[n_r + c]++] = r;
  }
  for (Node v = 0; v < n; ++v) {
    auto first = adj_.begin() + static_cast<std::ptrdiff_t>(xadj_[v]);
    auto last = adj_.begin() + static_cast<std::ptrdiff_t>(xadj_[v + 1]);
    std::sort(first, last);
    if (std::adjacent_find(first, last) != last) {
      throw ShapeError("duplicate edge in bipartite graph");
    }
  }
}

long BipartiteGraph::total_weight() const {
  return std::accumulate(weights_.begin(), weights_.end(), 0L);
}

BipartiteGraph to_bipartite(const RatingMatrix& m) {
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(m.nnz());
  for (const Entry& e : m.entries()) edges.emplace_back(e.row, e.col);
  return BipartiteGraph(m.n_rows(), m.n_cols(), edges);
}

namespace {

// Rows and columns are balanced separately: a part of the bisection must hold
// a fair share of each, not just of the total weight. Otherwise the cheapest
// bisection of a matrix with many more columns than rows often leaves one
// part with no rows at all.
struct Balance {
  double bound[2] = {0.0, 0.0};  // allowed |w0 - w1| per class

  Balance() = default;
  Balance(const std::array<long, 2>& total, const std::array<long, 2>& max_weight,
          double tol) {
    for (int c = 0; c < 2; ++c) {
      bound[c] = total[c] == 0 ? 0.0
                               : std::max(tol * static_cast<double>(total[c]),
                                          static_cast<double>(max_weight[c]));
    }
  }

  // Worst ratio of deviation to bound; feasible when at most one.
  double excess(long d_rows, long d_cols) const {
    const long d[2] = {std::labs(d_rows), std::labs(d_cols)};
    double e = 0.0;
    for (int c = 0; c < 2; ++c) {
      if (d[c] == 0) continue;
      e = bound[c] > 0 ? std::max(e, static_cast<double>(d[c]) / bound[c])
                       : std::numeric_limits<double>::infinity();
    }
    return e;
  }
  static bool feasible(double e) { return e <= 1.0 + 1e-9; }
};

using Weight2 = std::array<long, 2>;  // row weight, column weight

// General weighted graph used on every level of the multilevel hierarchy;
// contracted graphs are no longer bipartite, so each node carries both a row
// and a column weight.
struct WGraph {
  std::vector<int> xadj{0};
  std::vector<int> adj;
  std::vector<int> ewgt;
  std::vector<Weight2> vwgt;
  Weight2 total{0, 0};
  Weight2 max_vwgt{0, 0};

  int n() const { return static_cast<int>(vwgt.size()); }
  long combined(int v) const { return vwgt[v][0] + vwgt[v][1]; }
  long combined_total() const { return total[0] + total[1]; }
};

WGraph from_bipartite(const BipartiteGraph& g) {
  WGraph w;
  const int n = g.n_nodes();
  w.xadj.assign(static_cast<std::size_t>(n) + 1, 0);
  w.vwgt.resize(static_cast<std::size_t>(n));
  for (Node v = 0; v < n; ++v) {
    for (Node u : g.neighbors(v)) {
      w.adj.push_back(u);
      w.ewgt.push_back(1);
    }
    w.xadj[v + 1] = static_cast<int>(w.adj.size());
    const int c = g.is_r(v) ? 0 : 1;
    w.vwgt[v] = {0, 0};
    w.vwgt[v][c] = g.weight(v);
    w.total[c] += g.weight(v);
    w.max_vwgt[c] = std::max<long>(w.max_vwgt[c], g.weight(v));
  }
  return w;
}

// Heavy-edge matching, then contraction. Unmatched isolated nodes are paired
// with each other so that graphs with many empty rows still shrink.
WGraph coarsen(const WGraph& g, Rng& rng, long max_vwgt,
               std::vector<int>& cmap) {
  const int n = g.n();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);

  std::vector<int> match(static_cast<std::size_t>(n), -1);
  int pending_isolated = -1;
  for (int v : order) {
    if (match[v] != -1) continue;
    if (g.xadj[v] == g.xadj[v + 1]) {
      if (pending_isolated != -1 &&
          g.combined(v) + g.combined(pending_isolated) <= max_vwgt) {
        match[v] = pending_isolated;
        match[pending_isolated] = v;
        pending_isolated = -1;
      } else {
        match[v] = v;
        pending_isolated = v;
      }
      continue;
    }
    int best = -1;
    int best_w = -1;
    for (int k = g.xadj[v]; k < g.xadj[v + 1]; ++k) {
      int u = g.adj[k];
      if (u == v || match[u] != -1) continue;
      if (g.combined(v) + g.combined(u) > max_vwgt) continue;
      if (g.ewgt[k] > best_w || (g.ewgt[k] == best_w && u < best)) {
        best = u;
        best_w = g.ewgt[k];
      }
    }
    if (best == -1) {
      match[v] = v;
    } else {
      match[v] = best;
      match[best] = v;
    }
  }

  cmap.assign(static_cast<std::size_t>(n), -1);
  int nc = 0;
  for (int v = 0; v < n; ++v) {
    if (cmap[v] != -1) continue;
    cmap[v] = nc;
    cmap[match[v]] = nc;
    ++nc;
  }
  std::vector<std::vector<int>> members(static_cast<std::size_t>(nc));
  for (int v = 0; v < n; ++v) members[cmap[v]].push_back(v);

  WGraph c;
  c.xadj.assign(static_cast<std::size_t>(nc) + 1, 0);
  c.vwgt.assign(static_cast<std::size_t>(nc), Weight2{0, 0});
  c.total = g.total;
  std::vector<int> slot(static_cast<std::size_t>(nc), -1);
  for (int cv = 0; cv < nc; ++cv) {
    const std::size_t begin = c.adj.size();
    for (int v : members[cv]) {
      c.vwgt[cv][0] += g.vwgt[v][0];
      c.vwgt[cv][1] += g.vwgt[v][1];
      for (int k = g.xadj[v]; k < g.xadj[v + 1]; ++k) {
        int cu = cmap[g.adj[k]];
        if (cu == cv) continue;
        if (slot[cu] == -1) {
          slot[cu] = static_cast<int>(c.adj.size());
          c.adj.push_back(cu);
          c.ewgt.push_back(g.ewgt[k]);
        } else {
          c.ewgt[slot[cu]] += g.ewgt[k];
        }
      }
    }
    for (std::size_t k = begin; k < c.adj.size(); ++k) slot[c.adj[k]] = -1;
    c.xadj[cv + 1] = static_cast<int>(c.adj.size());
    for (int k = 0; k < 2; ++k) c.max_vwgt[k] = std::max(c.max_vwgt[k], c.vwgt[cv][k]);
  }
  return c;
}

// Objective used to rank bisections: feasibility first, then cut weight,
// then imbalance.
struct Score {
  bool feasible;
  long cut;
  double imbalance;

  bool better_than(const Score& o) const {
    if (feasible != o.feasible) return feasible;
    if (!feasible) return imbalance < o.imbalance ||
                          (imbalance == o.imbalance && cut < o.cut);
    return cut < o.cut || (cut == o.cut && imbalance < o.imbalance);
  }
};

class Bisection {
 public:
  Bisection(const WGraph& g, std::vector<int> side, const Balance& balance)
      : g_(g), side_(std::move(side)), balance_(balance) {
    recompute();
  }

  const std::vector<int>& side() const { return side_; }
  Score score() const {
    const double e = imbalance();
    return {Balance::feasible(e), cut_, e};
  }

  // Boundary Fiduccia-Mattheyses with rollback to the best prefix.
  void refine(int passes) {
    for (int pass = 0; pass < passes; ++pass) {
      if (!fm_pass()) break;
    }
    ensure_nonempty();
  }

 private:
  double imbalance_of(const Weight2& w0, const Weight2& w1) const {
    return balance_.excess(w0[0] - w1[0], w0[1] - w1[1]);
  }
  double imbalance() const { return imbalance_of(weight_[0], weight_[1]); }

  void recompute() {
    const int n = g_.n();
    internal_.assign(static_cast<std::size_t>(n), 0);
    external_.assign(static_cast<std::size_t>(n), 0);
    weight_[0] = weight_[1] = Weight2{0, 0};
    cut_ = 0;
    for (int v = 0; v < n; ++v) {
      for (int c = 0; c < 2; ++c) weight_[side_[v]][c] += g_.vwgt[v][c];
      for (int k = g_.xadj[v]; k < g_.xadj[v + 1]; ++k) {
        if (side_[g_.adj[k]] == side_[v]) {
          internal_[v] += g_.ewgt[k];
        } else {
          external_[v] += g_.ewgt[k];
          cut_ += g_.ewgt[k];
        }
      }
    }
    cut_ /= 2;
  }

  long gain(int v) const { return external_[v] - internal_[v]; }

  void move(int v) {
    const int from = side_[v];
    const int to = 1 - from;
    cut_ -= gain(v);
    side_[v] = to;
    for (int c = 0; c < 2; ++c) {
      weight_[from][c] -= g_.vwgt[v][c];
      weight_[to][c] += g_.vwgt[v][c];
    }
    std::swap(internal_[v], external_[v]);
    for (int k = g_.xadj[v]; k < g_.xadj[v + 1]; ++k) {
      int u = g_.adj[k];
      if (side_[u] == to) {
        internal_[u] += g_.ewgt[k];
        external_[u] -= g_.ewgt[k];
      } else {
        internal_[u] -= g_.ewgt[k];
        external_[u] += g_.ewgt[k];
      }
    }
  }

  bool fm_pass() {
    const int n = g_.n();
    using Item = std::tuple<long, int, int>;  // gain, -node, stamp
    std::priority_queue<Item> heap;
    std::vector<int> stamp(static_cast<std::size_t>(n), 0);
    std::vector<char> locked(static_cast<std::size_t>(n), 0);

    // Out of balance: every node is a candidate, not just the boundary.
    const bool start_feasible = Balance::feasible(imbalance());
    for (int v = 0; v < n; ++v) {
      if (external_[v] > 0 || !start_feasible) heap.emplace(gain(v), -v, 0);
    }

    Score best = score();
    const Score start = best;
    std::vector<int> moves;
    std::size_t best_len = 0;
    const std::size_t patience =
        static_cast<std::size_t>(std::max(50, n / 20));

    while (!heap.empty()) {
      auto [gv, neg_v, st] = heap.top();
      heap.pop();
      const int v = -neg_v;
      if (locked[v] || st != stamp[v] || gv != gain(v)) continue;

      const int from = side_[v];
      Weight2 w[2] = {weight_[0], weight_[1]};
      for (int c = 0; c < 2; ++c) {
        w[from][c] -= g_.vwgt[v][c];
        w[1 - from][c] += g_.vwgt[v][c];
      }
      const double new_imb = imbalance_of(w[0], w[1]);
      if (!Balance::feasible(new_imb) && new_imb >= imbalance()) continue;
      if (w[from][0] + w[from][1] == 0) continue;

      move(v);
      locked[v] = 1;
      moves.push_back(v);
      for (int k = g_.xadj[v]; k < g_.xadj[v + 1]; ++k) {
        int u = g_.adj[k];
        if (locked[u]) continue;
        ++stamp[u];
        heap.emplace(gain(u), -u, stamp[u]);
      }
      Score now = score();
      if (now.better_than(best)) {
        best = now;
        best_len = moves.size();
      } else if (moves.size() - best_len > patience) {
        break;
      }
    }
    while (moves.size() > best_len) {
      move(moves.back());
      moves.pop_back();
    }
    return best.better_than(start);
  }

  void ensure_nonempty() {
    for (int s = 0; s < 2; ++s) {
      if (weight_[s][0] + weight_[s][1] > 0) continue;
      int pick = -1;
      for (int v = 0; v < g_.n(); ++v) {
        if (side_[v] == s) continue;
        if (pick == -1 || gain(v) > gain(pick)) pick = v;
      }
      if (pick != -1) move(pick);
    }
  }

  const WGraph& g_;
  std::vector<int> side_;
  Balance balance_;
  std::vector<long> internal_;
  std::vector<long> external_;
  Weight2 weight_[2] = {{0, 0}, {0, 0}};
  long cut_ = 0;
};

// Greedy graph growing from `start`: pull the highest-gain frontier node into
// part 0 until it holds half of the weight.
std::vector<int> grow_region(const WGraph& g, int start, Rng& rng) {
  const int n = g.n();
  std::vector<int> side(static_cast<std::size_t>(n), 1);
  std::vector<long> to_zero(static_cast<std::size_t>(n), 0);
  std::vector<char> frontier(static_cast<std::size_t>(n), 0);
  long w0 = 0;
  const long target = g.combined_total() / 2;
  int next = start;
  while (w0 < target) {
    if (next == -1) {
      // Disconnected: jump to a random node still in part 1.
      std::vector<int> rest;
      for (int v = 0; v < n; ++v) {
        if (side[v] == 1) rest.push_back(v);
      }
      if (rest.empty()) break;
      next = rest[rng.uniform(rest.size())];
    }
    const int v = next;
    side[v] = 0;
    frontier[v] = 0;
    w0 += g.combined(v);
    for (int k = g.xadj[v]; k < g.xadj[v + 1]; ++k) {
      int u = g.adj[k];
      if (side[u] == 1) {
        to_zero[u] += g.ewgt[k];
        frontier[u] = 1;
      }
    }
    next = -1;
    long best_gain = std::numeric_limits<long>::min();
    for (int u = 0; u < n; ++u) {
      if (!frontier[u]) continue;
      long total_deg = 0;
      for (int k = g.xadj[u]; k < g.xadj[u + 1]; ++k) total_deg += g.ewgt[k];
      long gain = 2 * to_zero[u] - total_deg;
      if (gain > best_gain) {
        best_gain = gain;
        next = u;
      }
    }
  }
  return side;
}

std::vector<int> initial_bisection(const WGraph& g, const Balance& balance,
                                   Rng& rng, int tries, int passes) {
  std::vector<int> best_side;
  Score best{false, std::numeric_limits<long>::max(),
             std::numeric_limits<double>::infinity()};
  for (int t = 0; t < tries; ++t) {
    int start = static_cast<int>(rng.uniform(static_cast<std::uint64_t>(g.n())));
    Bisection b(g, grow_region(g, start, rng), balance);
    b.refine(passes);
    if (best_side.empty() || b.score().better_than(best)) {
      best = b.score();
      best_side = b.side();
    }
  }
  return best_side;
}

std::pair<std::vector<int>, Score> multilevel_bisect(const WGraph& finest,
                                                     const PartitionOptions& o,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  // Coarsening preserves class totals, so one balance serves every level.
  const Balance balance(finest.total, finest.max_vwgt, o.balance_tol);
  std::vector<WGraph> levels;
  std::vector<std::vector<int>> cmaps;
  levels.push_back(finest);
  const long max_vwgt = std::max<long>(
      1, static_cast<long>(1.5 * static_cast<double>(finest.combined_total()) /
                           std::max(1, o.coarsen_to)));
  while (levels.back().n() > o.coarsen_to && levels.size() < 64) {
    std::vector<int> cmap;
    WGraph next = coarsen(levels.back(), rng, max_vwgt, cmap);
    const bool stalled = next.n() > 0.95 * levels.back().n();
    if (next.n() == levels.back().n()) break;
    levels.push_back(std::move(next));
    cmaps.push_back(std::move(cmap));
    if (stalled) break;
  }

  // Coarse vertices can exceed the per-class bound; relax it there to the
  // heaviest vertex of the level.
  auto level_balance = [&](const WGraph& g) {
    Balance b = balance;
    for (int c = 0; c < 2; ++c) {
      if (g.total[c] > 0) b.bound[c] = std::max(b.bound[c], static_cast<double>(g.max_vwgt[c]));
    }
    return b;
  };

  std::vector<int> side = initial_bisection(levels.back(), level_balance(levels.back()),
                                            rng, o.initial_tries, o.refine_passes);
  for (std::size_t l = levels.size() - 1; l > 0; --l) {
    const std::vector<int>& cmap = cmaps[l - 1];
    std::vector<int> fine(cmap.size());
    for (std::size_t v = 0; v < cmap.size(); ++v) fine[v] = side[cmap[v]];
    Bisection b(levels[l - 1], std::move(fine), level_balance(levels[l - 1]));
    b.refine(o.refine_passes);
    side = b.side();
  }
  Bisection final_state(levels.front(), side, balance);
  return {side, final_state.score()};
}

EdgePartition make_edge_partition(const BipartiteGraph& g,
                                  std::vector<int> side) {
  EdgePartition p;
  p.parts.resize(2);
  for (Node v = 0; v < g.n_nodes(); ++v) {
    p.parts[side[v]].push_back(v);
    for (Node u : g.neighbors(v)) {
      if (u > v && side[u] != side[v]) p.cut_edges.emplace_back(v, u);
    }
  }
  p.side = std::move(side);
  return p;
}

}  // namespace

EdgePartition gpes_bisect(const BipartiteGraph& g,
                          const PartitionOptions& options) {
  if (g.n_nodes() < 2) {
    throw NoSplitError("graph with " + std::to_string(g.n_nodes()) +
                       " node(s) is too small to bisect");
  }
  const WGraph finest = from_bipartite(g);
  // A few independent V-cycles; keep the best.
  constexpr int kCycles = 4;
  Rng seeds(options.seed ^ 0x5bd1e995u);
  std::vector<int> best_side;
  Score best{false, 0, 0.0};
  for (int c = 0; c < kCycles; ++c) {
    auto [side, score] = multilevel_bisect(finest, options, seeds.next());
    if (best_side.empty() || score.better_than(best)) {
      best = score;
      best_side = std::move(side);
    }
  }
  return make_edge_partition(g, std::move(best_side));
}

EdgePartition gpes_bisect(const BipartiteGraph& g, double balance_tol,
                          std::uint64_t seed) {
  PartitionOptions o;
  o.balance_tol = balance_tol;
  o.seed = seed;
  return gpes_bisect(g, o);
}

namespace {

// Maximum matching on the cut-edge graph between part-0 and part-1 boundary
// nodes, then both Konig covers.
struct CutGraph {
  std::vector<Node> left;                // part-0 endpoints, ascending
  std::vector<Node> right;               // part-1 endpoints, ascending
  std::vector<std::vector<int>> adj_l;   // left -> right positions
  std::vector<std::vector<int>> adj_r;   // right -> left positions
};

CutGraph build_cut_graph(const BipartiteGraph& g, const EdgePartition& e) {
  CutGraph c;
  std::vector<int> pos(static_cast<std::size_t>(g.n_nodes()), -1);
  for (auto [a, b] : e.cut_edges) {
    for (Node v : {a, b}) {
      if (pos[v] != -1) continue;
      if (e.side[v] == 0) {
        c.left.push_back(v);
      } else {
        c.right.push_back(v);
      }
      pos[v] = 0;
    }
  }
  std::sort(c.left.begin(), c.left.end());
  std::sort(c.right.begin(), c.right.end());
  for (std::size_t k = 0; k < c.left.size(); ++k) pos[c.left[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < c.right.size(); ++k) pos[c.right[k]] = static_cast<int>(k);
  c.adj_l.resize(c.left.size());
  c.adj_r.resize(c.right.size());
  for (auto [a, b] : e.cut_edges) {
    Node l = e.side[a] == 0 ? a : b;
    Node r = e.side[a] == 0 ? b : a;
    c.adj_l[pos[l]].push_back(pos[r]);
    c.adj_r[pos[r]].push_back(pos[l]);
  }
  for (auto& a : c.adj_l) std::sort(a.begin(), a.end());
  for (auto& a : c.adj_r) std::sort(a.begin(), a.end());
  return c;
}

// Augmenting-path matching; returns match arrays for both sides.
std::pair<std::vector<int>, std::vector<int>> max_matching(const CutGraph& c) {
  const int nl = static_cast<int>(c.left.size());
  const int nr = static_cast<int>(c.right.size());
  std::vector<int> ml(static_cast<std::size_t>(nl), -1);
  std::vector<int> mr(static_cast<std::size_t>(nr), -1);
  for (int s = 0; s < nl; ++s) {
    // BFS over alternating paths from free left vertex s.
    std::vector<int> parent_r(static_cast<std::size_t>(nr), -2);
    std::deque<int> queue{s};
    int free_r = -1;
    while (!queue.empty() && free_r == -1) {
      int l = queue.front();
      queue.pop_front();
      for (int r : c.adj_l[l]) {
        if (parent_r[r] != -2) continue;
        parent_r[r] = l;
        if (mr[r] == -1) {
          free_r = r;
          break;
        }
        queue.push_back(mr[r]);
      }
    }
    if (free_r == -1) continue;
    int r = free_r;
    while (r != -1) {
      int l = parent_r[r];
      int prev = ml[l];
      ml[l] = r;
      mr[r] = l;
      r = prev;
    }
  }
  return {ml, mr};
}

// Konig cover starting from free vertices on the `from_left` side.
std::vector<Node> konig_cover(const CutGraph& c, const std::vector<int>& ml,
                              const std::vector<int>& mr, bool from_left) {
  const auto& adj_a = from_left ? c.adj_l : c.adj_r;
  const auto& match_a = from_left ? ml : mr;
  const auto& match_b = from_left ? mr : ml;
  const auto& nodes_a = from_left ? c.left : c.right;
  const auto& nodes_b = from_left ? c.right : c.left;
  std::vector<char> za(nodes_a.size(), 0);
  std::vector<char> zb(nodes_b.size(), 0);
  std::deque<int> queue;
  for (std::size_t a = 0; a < nodes_a.size(); ++a) {
    if (match_a[a] == -1) {
      za[a] = 1;
      queue.push_back(static_cast<int>(a));
    }
  }
  while (!queue.empty()) {
    int a = queue.front();
    queue.pop_front();
    for (int b : adj_a[a]) {
      if (zb[b] || match_a[a] == b) continue;
      zb[b] = 1;
      int next = match_b[b];
      if (next != -1 && !za[next]) {
        za[next] = 1;
        queue.push_back(next);
      }
    }
  }
  std::vector<Node> cover;
  for (std::size_t a = 0; a < nodes_a.size(); ++a) {
    if (!za[a]) cover.push_back(nodes_a[a]);
  }
  for (std::size_t b = 0; b < nodes_b.size(); ++b) {
    if (zb[b]) cover.push_back(nodes_b[b]);
  }
  std::sort(cover.begin(), cover.end());
  return cover;
}

// Moves separator nodes back into a part when they touch no node of the
// other part. Keeps the separator minimal under single-node removal.
void return_redundant(const BipartiteGraph& g, std::vector<int>& side,
                      const std::vector<int>& fallback) {
  for (Node s = 0; s < g.n_nodes(); ++s) {
    if (side[s] != -1) continue;
    bool touches[2] = {false, false};
    for (Node u : g.neighbors(s)) {
      if (side[u] >= 0) touches[side[u]] = true;
    }
    if (!touches[0] && !touches[1]) {
      side[s] = fallback[s];
    } else if (!touches[1]) {
      side[s] = 0;
    } else if (!touches[0]) {
      side[s] = 1;
    }
  }
}

// Fiduccia-Mattheyses on a vertex separator. Moving separator node v into
// part t pulls its neighbours in the other part into the separator; the gain
// is the resulting drop in separator weight. Ranking is feasibility, then
// separator weight, then imbalance; each pass rolls back to its best prefix.
class SeparatorRefiner {
 public:
  SeparatorRefiner(const BipartiteGraph& g, std::vector<int> side,
                   const Balance& balance)
      : g_(g), side_(std::move(side)), balance_(balance) {
    const Node n = g_.n_nodes();
    adjacent_.assign(static_cast<std::size_t>(n), {0, 0});
    for (Node v = 0; v < n; ++v) {
      if (side_[v] == -1) {
        sep_ += g_.weight(v);
      } else {
        weight_[side_[v]][cls(v)] += g_.weight(v);
      }
      for (Node u : g_.neighbors(v)) {
        if (side_[u] >= 0) adjacent_[v][side_[u]] += g_.weight(u);
      }
    }
  }

  std::vector<int> take() { return std::move(side_); }

  void refine(int passes) {
    for (int pass = 0; pass < passes; ++pass) {
      if (!pass_once()) break;
    }
  }

 private:
  struct Score {
    bool feasible;
    long sep;
    double imbalance;
    bool better_than(const Score& o) const {
      if (feasible != o.feasible) return feasible;
      if (!feasible) return imbalance < o.imbalance ||
                            (imbalance == o.imbalance && sep < o.sep);
      return sep < o.sep || (sep == o.sep && imbalance < o.imbalance);
    }
  };

  int cls(Node v) const { return g_.is_r(v) ? 0 : 1; }
  double imbalance_of(const Weight2& w0, const Weight2& w1) const {
    return balance_.excess(w0[0] - w1[0], w0[1] - w1[1]);
  }
  double imbalance() const { return imbalance_of(weight_[0], weight_[1]); }
  Score score() const {
    const double e = imbalance();
    return {Balance::feasible(e), sep_, e};
  }
  long gain(Node v, int t) const { return g_.weight(v) - adjacent_[v][1 - t]; }

  // Reassigns x and keeps weights and neighbour tallies current. Separator
  // neighbours whose tallies change are reported through `touched`.
  void set_side(Node x, int to, std::vector<Node>* touched) {
    const int from = side_[x];
    const long w = g_.weight(x);
    if (from == -1) sep_ -= w; else weight_[from][cls(x)] -= w;
    if (to == -1) sep_ += w; else weight_[to][cls(x)] += w;
    side_[x] = to;
    for (Node u : g_.neighbors(x)) {
      if (from >= 0) adjacent_[u][from] -= w;
      if (to >= 0) adjacent_[u][to] += w;
      if (touched && side_[u] == -1) touched->push_back(u);
    }
  }

  bool pass_once() {
    const Node n = g_.n_nodes();
    using Item = std::tuple<long, Node, int, int>;  // gain, -node, target, stamp
    std::priority_queue<Item> heap;
    std::vector<int> stamp(static_cast<std::size_t>(n), 0);
    std::vector<char> locked(static_cast<std::size_t>(n), 0);
    auto push = [&](Node v) {
      ++stamp[v];
      for (int t = 0; t < 2; ++t) heap.emplace(gain(v, t), -v, t, stamp[v]);
    };
    for (Node v = 0; v < n; ++v) {
      if (side_[v] == -1) push(v);
    }

    struct Change {
      Node node;
      int from;
    };
    std::vector<Change> log;
    std::vector<std::size_t> move_end;
    Score best = score();
    const Score start = best;
    std::size_t best_moves = 0;
    const std::size_t patience =
        static_cast<std::size_t>(std::max<Node>(50, n / 20));
    std::vector<Node> touched;

    while (!heap.empty()) {
      auto [gv, neg_v, t, st] = heap.top();
      heap.pop();
      const Node v = -neg_v;
      if (locked[v] || side_[v] != -1 || st != stamp[v]) continue;
      Weight2 w[2] = {weight_[0], weight_[1]};
      w[t][cls(v)] += g_.weight(v);
      for (Node u : g_.neighbors(v)) {
        if (side_[u] == 1 - t) w[1 - t][cls(u)] -= g_.weight(u);
      }
      if (w[1 - t][0] + w[1 - t][1] <= 0) continue;
      const double new_imb = imbalance_of(w[0], w[1]);
      if (!Balance::feasible(new_imb) && new_imb >= imbalance()) continue;

      touched.clear();
      log.push_back({v, -1});
      set_side(v, t, &touched);
      locked[v] = 1;
      std::vector<Node> pull;
      for (Node u : g_.neighbors(v)) {
        if (side_[u] == 1 - t) pull.push_back(u);
      }
      for (Node u : pull) {
        log.push_back({u, 1 - t});
        set_side(u, -1, &touched);
        touched.push_back(u);
      }
      move_end.push_back(log.size());
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (Node u : touched) {
        if (!locked[u] && side_[u] == -1) push(u);
      }

      Score now = score();
      if (now.better_than(best)) {
        best = now;
        best_moves = move_end.size();
      } else if (move_end.size() - best_moves > patience) {
        break;
      }
    }
    const std::size_t keep = best_moves == 0 ? 0 : move_end[best_moves - 1];
    while (log.size() > keep) {
      set_side(log.back().node, log.back().from, nullptr);
      log.pop_back();
    }
    return best.better_than(start);
  }

  const BipartiteGraph& g_;
  std::vector<int> side_;
  Balance balance_;
  std::vector<std::array<long, 2>> adjacent_;  // neighbour weight per part
  Weight2 weight_[2] = {{0, 0}, {0, 0}};
  long sep_ = 0;
};

struct SeparatorCandidate {
  std::vector<int> side;  // -1 for separator
  long sep_weight = 0;
  long sep_degree = 0;
  double imbalance = 0.0;
  bool balanced = false;
  bool valid = false;
};

SeparatorCandidate evaluate_cover(const BipartiteGraph& g,
                                  const std::vector<int>& edge_side,
                                  const std::vector<Node>& cover,
                                  const PartitionOptions& options) {
  std::vector<int> side = edge_side;
  for (Node v : cover) side[v] = -1;
  return_redundant(g, side, edge_side);

  Weight2 total{0, 0}, max_weight{0, 0};
  for (Node v = 0; v < g.n_nodes(); ++v) {
    const int c = g.is_r(v) ? 0 : 1;
    total[c] += g.weight(v);
    max_weight[c] = std::max<long>(max_weight[c], g.weight(v));
  }
  const Balance balance(total, max_weight, options.balance_tol);
  SeparatorRefiner refiner(g, std::move(side), balance);
  refiner.refine(options.refine_passes);
  side = refiner.take();
  return_redundant(g, side, edge_side);

  SeparatorCandidate cand;
  Weight2 w[2] = {{0, 0}, {0, 0}};
  for (Node v = 0; v < g.n_nodes(); ++v) {
    if (side[v] == -1) {
      cand.sep_weight += g.weight(v);
      cand.sep_degree += static_cast<long>(g.neighbors(v).size());
    } else {
      w[side[v]][g.is_r(v) ? 0 : 1] += g.weight(v);
    }
  }
  cand.side = std::move(side);
  cand.imbalance = balance.excess(w[0][0] - w[1][0], w[0][1] - w[1][1]);
  cand.balanced = Balance::feasible(cand.imbalance);
  cand.valid = w[0][0] + w[0][1] > 0 && w[1][0] + w[1][1] > 0;
  return cand;
}

}  // namespace

VertexPartition gpvs_bisect(const BipartiteGraph& g,
                            const PartitionOptions& options) {
  EdgePartition e = gpes_bisect(g, options);
  CutGraph cut = build_cut_graph(g, e);
  auto [ml, mr] = max_matching(cut);

  std::vector<std::vector<Node>> covers = {
      konig_cover(cut, ml, mr, true),
      konig_cover(cut, ml, mr, false),
      cut.left,
      cut.right,
  };
  SeparatorCandidate best;
  for (const auto& cover : covers) {
    SeparatorCandidate cand = evaluate_cover(g, e.side, cover, options);
    if (!cand.valid) continue;
    // Balanced candidates first, then the lighter separator.
    bool take = !best.valid ||
                std::tuple(!cand.balanced, cand.sep_weight, cand.sep_degree, cand.imbalance) <
                    std::tuple(!best.balanced, best.sep_weight, best.sep_degree, best.imbalance);
    if (take) best = std::move(cand);
  }
  if (!best.valid) {
    throw NoSplitError("every vertex separator leaves one side empty");
  }

  VertexPartition p;
  p.parts.resize(2);
  for (Node v = 0; v < g.n_nodes(); ++v) {
    if (best.side[v] == -1) {
      p.separator.push_back(v);
    } else {
      p.parts[best.side[v]].push_back(v);
    }
  }
  p.side = std::move(best.side);
  return p;
}

VertexPartition gpvs_bisect(const BipartiteGraph& g, double balance_tol,
                            std::uint64_t seed) {
  PartitionOptions o;
  o.balance_tol = balance_tol;
  o.seed = seed;
  return gpvs_bisect(g, o);
}

std::pair<std::vector<int>, int> connected_components(
    const BipartiteGraph& g, std::span<const char> keep) {
  std::vector<int> comp(static_cast<std::size_t>(g.n_nodes()), -1);
  int count = 0;
  std::vector<Node> stack;
  for (Node s = 0; s < g.n_nodes(); ++s) {
    if (!keep[s] || comp[s] != -1) continue;
    comp[s] = count;
    stack.push_back(s);
    while (!stack.empty()) {
      Node v = stack.back();
      stack.pop_back();
      for (Node u : g.neighbors(v)) {
        if (keep[u] && comp[u] == -1) {
          comp[u] = count;
          stack.push_back(u);
        }
      }
    }
    ++count;
  }
  return {comp, count};
}

std::string check_edge_partition(const BipartiteGraph& g,
                                 const EdgePartition& p) {
  const Node n = g.n_nodes();
  if (p.side.size() != static_cast<std::size_t>(n)) return "side vector size";
  if (p.parts.size() < 2) return "fewer than two parts";
  std::vector<int> seen(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < p.parts.size(); ++k) {
    if (p.parts[k].empty()) return "part " + std::to_string(k) + " is empty";
    for (Node v : p.parts[k]) {
      if (v < 0 || v >= n || seen[v] != -1) return "node in two parts";
      if (p.side[v] != static_cast<int>(k)) return "side disagrees with parts";
      seen[v] = static_cast<int>(k);
    }
  }
  if (std::find(seen.begin(), seen.end(), -1) != seen.end()) {
    return "node not assigned to any part";
  }
  std::set<std::pair<Node, Node>> cut(p.cut_edges.begin(), p.cut_edges.end());
  if (cut.size() != p.cut_edges.size()) return "repeated cut edge";
  std::size_t cross = 0;
  for (Node v = 0; v < n; ++v) {
    for (Node u : g.neighbors(v)) {
      if (u <= v) continue;
      bool is_cut = cut.count({v, u}) > 0;
      if (p.side[u] != p.side[v]) {
        ++cross;
        if (!is_cut) return "edge joining parts is not in the cut set";
      } else if (is_cut) {
        return "cut set contains an internal edge";
      }
    }
  }
  if (cross != cut.size()) return "cut set contains a non-edge";
  return {};
}

std::string check_vertex_partition(const BipartiteGraph& g,
                                   const VertexPartition& p) {
  const Node n = g.n_nodes();
  if (p.side.size() != static_cast<std::size_t>(n)) return "side vector size";
  if (p.parts.size() < 2) return "fewer than two parts";
  std::vector<int> seen(static_cast<std::size_t>(n), -2);
  for (std::size_t k = 0; k < p.parts.size(); ++k) {
    if (p.parts[k].empty()) return "part " + std::to_string(k) + " is empty";
    for (Node v : p.parts[k]) {
      if (v < 0 || v >= n || seen[v] != -2) return "node listed twice";
      if (p.side[v] != static_cast<int>(k)) return "side disagrees with parts";
      seen[v] = static_cast<int>(k);
    }
  }
  for (Node v : p.separator) {
    if (v < 0 || v >= n || seen[v] != -2) return "separator overlaps a part";
    if (p.side[v] != -1) return "separator node has a part id";
    seen[v] = -1;
  }
  if (std::find(seen.begin(), seen.end(), -2) != seen.end()) {
    return "node neither in a part nor in the separator";
  }
  std::vector<char> keep(static_cast<std::size_t>(n));
  for (Node v = 0; v < n; ++v) keep[v] = p.side[v] >= 0;
  auto [comp, count] = connected_components(g, keep);
  std::vector<int> comp_part(static_cast<std::size_t>(count), -1);
  for (Node v = 0; v < n; ++v) {
    if (comp[v] < 0) continue;
    int& cp = comp_part[comp[v]];
    if (cp == -1) cp = p.side[v];
    if (cp != p.side[v]) return "a component spans two parts";
  }
  return {};
}

}  // namespace lmf
