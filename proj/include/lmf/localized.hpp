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

// Localized factorization: every assembled block of a tree is factorized on
// its own, and a cell is predicted by averaging the blocks that contain it.
//
// A block only votes for a cell when both the row and the column have at
// least one training entry inside that block; a factor row fit to nothing is
// zero and would drag the mean toward 0. Cells with no voting block use a
// damped bias model (or, optionally, the product of factors taken from the
// blocks that hold the row and the column).

#ifndef LMF_LOCALIZED_HPP_
#define LMF_LOCALIZED_HPP_

#include <memory>
#include <string>
#include <vector>

#include "lmf/bbdf.hpp"
#include "lmf/factorize.hpp"
#include "lmf/sparse.hpp"

namespace lmf {

// mean + row bias + column bias, each bias shrunk by `damping` virtual
// ratings. Column biases are fit first, row biases on the residual.
struct BiasModel {
  double mean = 0.0;
  double damping = 25.0;
  std::vector<double> row_bias;
  std::vector<double> col_bias;

  static BiasModel fit(const RatingMatrix& m, double damping = 25.0);
  double predict(Index i, Index j) const;
};

enum class CrossBlockMode {
  kBias,           // bias model for cells no block covers
  kFactorProduct,  // mean of u.v over blocks holding the row and the column
};

std::string to_string(CrossBlockMode mode);
CrossBlockMode parse_cross_block_mode(const std::string& name);

struct BlockModel {
  int leaf = -1;
  std::vector<Index> rows;  // global indices, block-local order
  std::vector<Index> cols;
  std::vector<char> row_seen;  // local row has a training entry in the block
  std::vector<char> col_seen;
  std::size_t entries = 0;
  FactorPair factors;
  double fit_seconds = 0.0;
};

struct LMFOptions {
  int threads = 1;
  // Factorization is deterministic either way; the flag is recorded so runs
  // can be told apart.
  bool deterministic = true;
  CrossBlockMode cross_block = CrossBlockMode::kBias;
  double damping = 25.0;
};

struct CellPrediction {
  double value = 0.0;  // clamped to the rating scale
  int votes = 0;       // blocks averaged; 0 means the cross-block path
};

class LMFModel {
 public:
  LMFModel() = default;
  LMFModel(BBDFTree tree, FactorizerSpec spec, std::vector<BlockModel> blocks,
           BiasModel fallback, double rating_lo, double rating_hi,
           LMFOptions options);

  const BBDFTree& tree() const { return *tree_; }
  const FactorizerSpec& spec() const { return spec_; }
  const std::vector<BlockModel>& blocks() const { return blocks_; }
  const BiasModel& fallback() const { return fallback_; }
  const LMFOptions& options() const { return options_; }
  double rating_lo() const { return rating_lo_; }
  double rating_hi() const { return rating_hi_; }
  Index n_rows() const { return tree_->n_rows; }
  Index n_cols() const { return tree_->n_cols; }
  double fit_seconds = 0.0;  // wall clock of the whole fit

  // Throws ShapeError for indices out of range.
  double predict(Index i, Index j) const { return predict_cell(i, j).value; }
  CellPrediction predict_cell(Index i, Index j) const;
  // Mean of raw block predictions over voting blocks, before clamping.
  // Throws DegenerateError when no block votes.
  double block_mean(Index i, Index j) const;
  // Assembled blocks containing both indices.
  int coverage_count(Index i, Index j) const;
  // Block ids (positions in blocks()) containing both indices.
  std::vector<int> covering_blocks(Index i, Index j) const;

 private:
  void check(Index i, Index j) const;
  double cross_block(Index i, Index j) const;

  std::shared_ptr<const BBDFTree> tree_;
  std::shared_ptr<const TreeIndex> index_;
  FactorizerSpec spec_;
  std::vector<BlockModel> blocks_;
  BiasModel fallback_;
  double rating_lo_ = 1.0;
  double rating_hi_ = 5.0;
  LMFOptions options_;
  std::vector<int> block_of_leaf_;         // node id -> block id or -1
  std::vector<std::vector<int>> local_row_;  // block -> global row -> local or -1
  std::vector<std::vector<int>> local_col_;
  std::vector<std::vector<int>> row_blocks_;  // global row -> blocks holding it
  std::vector<std::vector<int>> col_blocks_;
};

// Factorizes every assembled block of `tree` over `m`, up to `threads` at a
// time, largest block first. Errors from a block are rethrown as BlockError.
LMFModel lmf_fit(const BBDFTree& tree, const RatingMatrix& m,
                 const FactorizerSpec& spec, const LMFOptions& options = {});

// Model directory: manifest.json (spec, options, block index lists, timings),
// tree.json, fallback.json and one factor file per block. Files other than
// the manifest depend only on the inputs, never on the thread count.
void save_model(const std::string& dir, const LMFModel& model);
LMFModel load_model(const std::string& dir);

}  // namespace lmf

#endif  // LMF_LOCALIZED_HPP_
