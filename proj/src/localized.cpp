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

#include "lmf/localized.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "lmf/errors.hpp"

namespace lmf {

using nlohmann::json;

BiasModel BiasModel::fit(const RatingMatrix& m, double damping) {
  BiasModel b;
  b.damping = damping;
  b.row_bias.assign(m.n_rows(), 0.0);
  b.col_bias.assign(m.n_cols(), 0.0);
  if (m.nnz() == 0) return b;
  double sum = 0.0;
  for (const Entry& e : m.entries()) sum += e.value;
  b.mean = sum / static_cast<double>(m.nnz());

  std::vector<double> acc(m.n_cols(), 0.0);
  for (const Entry& e : m.entries()) acc[e.col] += e.value - b.mean;
  for (Index j = 0; j < m.n_cols(); ++j) {
    b.col_bias[j] = acc[j] / (static_cast<double>(m.col_degree(j)) + damping);
  }
  acc.assign(m.n_rows(), 0.0);
  for (const Entry& e : m.entries()) acc[e.row] += e.value - b.mean - b.col_bias[e.col];
  for (Index i = 0; i < m.n_rows(); ++i) {
    b.row_bias[i] = acc[i] / (static_cast<double>(m.row_degree(i)) + damping);
  }
  return b;
}

double BiasModel::predict(Index i, Index j) const {
  double p = mean;
  if (i >= 0 && static_cast<std::size_t>(i) < row_bias.size()) p += row_bias[i];
  if (j >= 0 && static_cast<std::size_t>(j) < col_bias.size()) p += col_bias[j];
  return p;
}

std::string to_string(CrossBlockMode mode) {
  return mode == CrossBlockMode::kBias ? "bias" : "factor_product";
}

CrossBlockMode parse_cross_block_mode(const std::string& name) {
  if (name == "bias") return CrossBlockMode::kBias;
  if (name == "factor_product" || name == "product") return CrossBlockMode::kFactorProduct;
  throw DomainError("unknown cross-block mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// Model

LMFModel::LMFModel(BBDFTree tree, FactorizerSpec spec,
                   std::vector<BlockModel> blocks, BiasModel fallback,
                   double rating_lo, double rating_hi, LMFOptions options)
    : tree_(std::make_shared<const BBDFTree>(std::move(tree))),
      spec_(spec),
      blocks_(std::move(blocks)),
      fallback_(std::move(fallback)),
      rating_lo_(rating_lo),
      rating_hi_(rating_hi),
      options_(options) {
  index_ = std::make_shared<const TreeIndex>(*tree_);
  block_of_leaf_.assign(tree_->nodes.size(), -1);
  local_row_.resize(blocks_.size());
  local_col_.resize(blocks_.size());
  row_blocks_.assign(tree_->n_rows, {});
  col_blocks_.assign(tree_->n_cols, {});
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const BlockModel& block = blocks_[b];
    if (block.leaf < 0 || static_cast<std::size_t>(block.leaf) >= tree_->nodes.size() ||
        !tree_->nodes[block.leaf].is_leaf()) {
      throw ShapeError("block " + std::to_string(b) + " does not name a leaf");
    }
    if (block.factors.n_rows() != static_cast<Index>(block.rows.size()) ||
        block.factors.n_cols() != static_cast<Index>(block.cols.size())) {
      throw ShapeError("block " + std::to_string(b) + " factors do not match its size");
    }
    block_of_leaf_[block.leaf] = static_cast<int>(b);
    local_row_[b].assign(tree_->n_rows, -1);
    local_col_[b].assign(tree_->n_cols, -1);
    for (std::size_t k = 0; k < block.rows.size(); ++k) {
      local_row_[b][block.rows[k]] = static_cast<int>(k);
      if (block.row_seen[k]) row_blocks_[block.rows[k]].push_back(static_cast<int>(b));
    }
    for (std::size_t k = 0; k < block.cols.size(); ++k) {
      local_col_[b][block.cols[k]] = static_cast<int>(k);
      if (block.col_seen[k]) col_blocks_[block.cols[k]].push_back(static_cast<int>(b));
    }
  }
}

void LMFModel::check(Index i, Index j) const {
  if (i < 0 || i >= n_rows() || j < 0 || j >= n_cols()) {
    throw ShapeError("cell (" + std::to_string(i) + ", " + std::to_string(j) +
                     ") out of range");
  }
}

std::vector<int> LMFModel::covering_blocks(Index i, Index j) const {
  check(i, j);
  std::vector<int> out;
  for (int leaf : index_->covering_leaves(i, j)) {
    if (block_of_leaf_[leaf] >= 0) out.push_back(block_of_leaf_[leaf]);
  }
  return out;
}

int LMFModel::coverage_count(Index i, Index j) const {
  check(i, j);
  return index_->coverage(i, j);
}

double LMFModel::block_mean(Index i, Index j) const {
  double sum = 0.0;
  int votes = 0;
  for (int b : covering_blocks(i, j)) {
    const BlockModel& block = blocks_[b];
    const int li = local_row_[b][i], lj = local_col_[b][j];
    if (!block.row_seen[li] || !block.col_seen[lj]) continue;
    sum += predict_unchecked(block.factors, li, lj);
    ++votes;
  }
  if (votes == 0) throw DegenerateError("no block predicts this cell");
  return sum / votes;
}

double LMFModel::cross_block(Index i, Index j) const {
  if (options_.cross_block == CrossBlockMode::kFactorProduct) {
    double sum = 0.0;
    int pairs = 0;
    for (int a : row_blocks_[i]) {
      const FactorPair& fa = blocks_[a].factors;
      const int li = local_row_[a][i];
      for (int b : col_blocks_[j]) {
        const auto v = blocks_[b].factors.V.row(local_col_[b][j]);
        const double s = fa.U.row(li).dot(v);
        if (fa.algorithm == Algorithm::kMmmfFast && fa.thresholds.cols() > 0) {
          int above = 0;
          for (Eigen::Index k = 0; k < fa.thresholds.cols(); ++k) above += s > fa.thresholds(li, k);
          sum += fa.rating_min + above;
        } else {
          sum += s;
        }
        ++pairs;
      }
    }
    if (pairs > 0) return sum / pairs;
  }
  return fallback_.predict(i, j);
}

CellPrediction LMFModel::predict_cell(Index i, Index j) const {
  check(i, j);
  CellPrediction out;
  double sum = 0.0;
  for (int leaf : index_->covering_leaves(i, j)) {
    const int b = block_of_leaf_[leaf];
    if (b < 0) continue;
    const BlockModel& block = blocks_[b];
    const int li = local_row_[b][i], lj = local_col_[b][j];
    if (!block.row_seen[li] || !block.col_seen[lj]) continue;
    sum += predict_unchecked(block.factors, li, lj);
    ++out.votes;
  }
  const double raw = out.votes > 0 ? sum / out.votes : cross_block(i, j);
  out.value = clamp_rating(raw, rating_lo_, rating_hi_);
  return out;
}

// ---------------------------------------------------------------------------
// Fitting

LMFModel lmf_fit(const BBDFTree& tree, const RatingMatrix& m,
                 const FactorizerSpec& spec, const LMFOptions& options) {
  spec.validate();
  if (options.threads < 1) throw DomainError("thread count must be at least 1");
  if (m.nnz() == 0) throw DegenerateError("cannot fit a matrix without entries");
  const auto start = std::chrono::steady_clock::now();

  const double lo = std::floor(m.min_value());
  const double hi = std::ceil(m.max_value());
  FactorizerSpec block_spec = spec;
  if (!(block_spec.scale_max > block_spec.scale_min)) {
    block_spec.scale_min = lo;
    block_spec.scale_max = std::max(hi, lo + 1.0);
  }

  std::vector<AssembledBlock> assembled = assemble_blocks(tree, m);
  const std::size_t k = assembled.size();
  std::vector<BlockModel> blocks(k);
  for (std::size_t b = 0; b < k; ++b) {
    BlockModel& out = blocks[b];
    const AssembledBlock& a = assembled[b];
    out.leaf = a.leaf;
    out.rows = a.rows;
    out.cols = a.cols;
    out.entries = a.local.nnz();
    out.row_seen.resize(a.rows.size());
    out.col_seen.resize(a.cols.size());
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
      out.row_seen[r] = a.local.row_degree(static_cast<Index>(r)) > 0;
    }
    for (std::size_t c = 0; c < a.cols.size(); ++c) {
      out.col_seen[c] = a.local.col_degree(static_cast<Index>(c)) > 0;
    }
  }

  // Largest block first keeps the makespan close to the largest block.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return blocks[x].entries > blocks[y].entries;
  });

  std::vector<std::exception_ptr> failures(k);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t q = next.fetch_add(1); q < k; q = next.fetch_add(1)) {
      const std::size_t b = order[q];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        if (assembled[b].local.nnz() == 0) {
          FactorPair empty;
          empty.algorithm = spec.algorithm;
          empty.U = FactorMatrix::Zero(static_cast<Eigen::Index>(blocks[b].rows.size()), spec.rank);
          empty.V = FactorMatrix::Zero(static_cast<Eigen::Index>(blocks[b].cols.size()), spec.rank);
          blocks[b].factors = std::move(empty);
        } else {
          blocks[b].factors = factorize(assembled[b].local, block_spec);
        }
      } catch (...) {
        failures[b] = std::current_exception();
      }
      blocks[b].fit_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(options.threads, std::max<std::size_t>(k, 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t b = 0; b < k; ++b) {
    if (!failures[b]) continue;
    try {
      std::rethrow_exception(failures[b]);
    } catch (const Error& e) {
      throw BlockError(e, static_cast<int>(b));
    }
  }

  LMFModel model(tree, block_spec, std::move(blocks), BiasModel::fit(m, options.damping),
                 lo, std::max(hi, lo + 1.0), options);
  model.fit_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string seen_string(const std::vector<char>& seen) {
  std::string s(seen.size(), '0');
  for (std::size_t k = 0; k < seen.size(); ++k) s[k] = seen[k] ? '1' : '0';
  return s;
}

std::vector<char> parse_seen(const std::string& s) {
  std::vector<char> out(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] != '0' && s[k] != '1') throw ParseError("bad seen mask in manifest", 0);
    out[k] = s[k] == '1';
  }
  return out;
}

std::string block_file(std::size_t b) {
  char name[32];
  std::snprintf(name, sizeof(name), "block_%04zu.bin", b);
  return name;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("bad JSON in '" + path.string() + "': " + e.what(), 0);
  }
}

}  // namespace

void save_model(const std::string& dir, const LMFModel& model) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  save_tree((root / "tree.json").string(), model.tree());

  json fb = {{"mean", model.fallback().mean},
             {"damping", model.fallback().damping},
             {"row_bias", model.fallback().row_bias},
             {"col_bias", model.fallback().col_bias}};
  write_json(root / "fallback.json", fb);

  json blocks = json::array();
  for (std::size_t b = 0; b < model.blocks().size(); ++b) {
    const BlockModel& block = model.blocks()[b];
    save_factors((root / block_file(b)).string(), block.factors, model.spec());
    blocks.push_back({{"leaf", block.leaf},
                      {"factors", block_file(b)},
                      {"entries", block.entries},
                      {"rows", block.rows},
                      {"cols", block.cols},
                      {"row_seen", seen_string(block.row_seen)},
                      {"col_seen", seen_string(block.col_seen)},
                      {"fit_seconds", block.fit_seconds}});
  }
  json manifest = {{"format", "lmf-model"},
                   {"version", 1},
                   {"spec", json::parse(spec_to_json_text(model.spec()))},
                   {"threads", model.options().threads},
                   {"deterministic", model.options().deterministic},
                   {"cross_block", to_string(model.options().cross_block)},
                   {"rating_lo", model.rating_lo()},
                   {"rating_hi", model.rating_hi()},
                   {"fit_seconds", model.fit_seconds},
                   {"blocks", blocks}};
  write_json(root / "manifest.json", manifest);
}

LMFModel load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  const json manifest = read_json(root / "manifest.json");
  try {
    if (manifest.at("format") != "lmf-model") throw ParseError("not a model manifest", 0);
    LMFOptions options;
    options.threads = manifest.at("threads").get<int>();
    options.deterministic = manifest.at("deterministic").get<bool>();
    options.cross_block = parse_cross_block_mode(manifest.at("cross_block").get<std::string>());

    const json fb = read_json(root / "fallback.json");
    BiasModel fallback;
    fallback.mean = fb.at("mean").get<double>();
    fallback.damping = fb.at("damping").get<double>();
    fallback.row_bias = fb.at("row_bias").get<std::vector<double>>();
    fallback.col_bias = fb.at("col_bias").get<std::vector<double>>();
    options.damping = fallback.damping;

    // Node ids are not stable across the tree file; blocks follow leaf order.
    BBDFTree tree = load_tree((root / "tree.json").string());
    const std::vector<int> leaves = tree.leaves();
    if (leaves.size() != manifest.at("blocks").size()) {
      throw ParseError("manifest block count differs from the tree's leaves", 0);
    }
    std::vector<BlockModel> blocks;
    for (const json& jb : manifest.at("blocks")) {
      BlockModel block;
      block.leaf = leaves[blocks.size()];
      block.entries = jb.at("entries").get<std::size_t>();
      block.rows = jb.at("rows").get<std::vector<Index>>();
      block.cols = jb.at("cols").get<std::vector<Index>>();
      block.row_seen = parse_seen(jb.at("row_seen").get<std::string>());
      block.col_seen = parse_seen(jb.at("col_seen").get<std::string>());
      block.fit_seconds = jb.value("fit_seconds", 0.0);
      if (block.row_seen.size() != block.rows.size() ||
          block.col_seen.size() != block.cols.size()) {
        throw ParseError("seen mask length differs from block size", 0);
      }
      block.factors = load_factors((root / jb.at("factors").get<std::string>()).string());
      blocks.push_back(std::move(block));
    }
    LMFModel model(std::move(tree), spec_from_json_text(manifest.at("spec").dump()), std::move(blocks),
                   std::move(fallback), manifest.at("rating_lo").get<double>(),
                   manifest.at("rating_hi").get<double>(), options);
    model.fit_seconds = manifest.value("fit_seconds", 0.0);
    return model;
  } catch (const json::exception& e) {
    throw ParseError("bad model manifest in '" + dir + "': " + e.what(), 0);
  }
}

}  // namespace lmf
