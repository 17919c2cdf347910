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

// Metrics, cross-validation folds and the benchmark protocol.

#ifndef LMF_EVAL_HPP_
#define LMF_EVAL_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmf/bbdf.hpp"
#include "lmf/factorize.hpp"
#include "lmf/localized.hpp"
#include "lmf/sparse.hpp"

namespace lmf {

// Root mean squared error over (truth, prediction) pairs. No clamping.
// Throws DegenerateError on an empty list.
double rmse(std::span<const std::pair<double, double>> pairs);

// Fraction of rounds whose first choice was accepted. Throws DegenerateError
// for an empty log.
double fchr(const FchrLog& log);

// Per-entry fold assignment, stratified per row: each row's entries are
// shuffled and dealt round-robin starting at a random fold, so every row
// with at least k entries lands in every fold.
struct FoldPlan {
  int n_folds = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold;              // parallel to m.entries()
  std::vector<std::string> warnings;  // rows with fewer than k entries

  // Same dimensions and labels as `m`, holding entries outside fold k.
  RatingMatrix train(const RatingMatrix& m, int k) const;
  std::vector<Entry> test(const RatingMatrix& m, int k) const;
};

FoldPlan kfold_split(const RatingMatrix& m, int k, std::uint64_t seed);

enum class BenchmarkMode { kBaseline, kLmf };

struct BenchmarkConfig {
  std::string dataset;  // rating log path
  RatingLogFormat format = RatingLogFormat::kWhitespace;
  BenchmarkMode mode = BenchmarkMode::kLmf;
  FactorizerSpec spec;
  PermuteMode permute = PermuteMode::kBalanced;
  double target_density = 0.08;
  int folds = 5;
  int max_folds = 0;  // run only the first n folds; 0 = all
  int threads = 1;
  std::uint64_t seed = 0;
  CrossBlockMode cross_block = CrossBlockMode::kBias;
  std::string dump_path;  // optional per-entry prediction dump (TSV)

  // Keys: dataset, format (tsv|csv), mode, algorithm, rank, lambda, lambda_u,
  // lambda_v, margin_c, learning_rate, max_iters, convergence_tol, permute,
  // target_density, folds, max_folds, threads, seed, cross_block, dump.
  // Unset factorizer fields take the algorithm's defaults.
  static BenchmarkConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct FoldReport {
  int fold = 0;
  double rmse = 0.0;
  std::size_t n_test = 0;
  std::size_t n_fallback = 0;
  double permute_seconds = 0.0;
  double fit_seconds = 0.0;      // wall clock of the whole fit
  double max_block_seconds = 0.0;
  double predict_seconds = 0.0;
  std::size_t blocks = 1;
  std::vector<double> block_densities;  // assembled, per block
  double assembled_density = 0.0;
  double fchr = -1.0;  // balanced mode only
};

struct EvalReport {
  BenchmarkConfig config;
  double rmse = 0.0;            // over the pooled test set
  double mean_fold_rmse = 0.0;  // mean of per-fold values
  double fallback_fraction = 0.0;
  std::size_t n_test = 0;
  std::vector<FoldReport> folds;
  std::vector<std::string> warnings;

  std::string to_json_text() const;
  void print_table(std::ostream& out) const;
};

// Loads the dataset, splits it, and runs permute -> fit -> predict -> score
// per fold. Stage failures are rethrown with the stage and fold in the
// message, keeping their error kind.
EvalReport run_benchmark(const BenchmarkConfig& config);
// Same protocol on an already loaded matrix.
EvalReport run_benchmark(const BenchmarkConfig& config, const RatingMatrix& m);

// Builds the tree for one training matrix as the benchmark does.
BBDFTree build_tree(const RatingMatrix& train, const BenchmarkConfig& config,
                    FchrLog* log = nullptr);

}  // namespace lmf

#endif  // LMF_EVAL_HPP_
