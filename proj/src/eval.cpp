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

#include "lmf/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "lmf/errors.hpp"
#include "lmf/rng.hpp"

namespace lmf {

using nlohmann::json;

double rmse(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw DegenerateError("RMSE of an empty prediction list");
  double sum = 0.0;
  for (auto [truth, pred] : pairs) sum += (truth - pred) * (truth - pred);
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

double fchr(const FchrLog& log) {
  if (log.first_choice.empty()) throw DegenerateError("FCHR of a log without rounds");
  const auto hits = std::count(log.first_choice.begin(), log.first_choice.end(), true);
  return static_cast<double>(hits) / static_cast<double>(log.first_choice.size());
}

// ---------------------------------------------------------------------------
// Folds

FoldPlan kfold_split(const RatingMatrix& m, int k, std::uint64_t seed) {
  if (k < 2) throw DomainError("fold count must be at least 2");
  FoldPlan plan;
  plan.n_folds = k;
  plan.seed = seed;
  plan.fold.assign(m.nnz(), -1);
  std::size_t pos = 0;  // entries are sorted by row
  for (Index i = 0; i < m.n_rows(); ++i) {
    const std::size_t n = m.row_degree(i);
    if (n == 0) continue;
    Rng rng(mix64(seed ^ hash_string(m.row_labels()[i])));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), pos);
    shuffle(order, rng);
    const auto offset = static_cast<std::size_t>(rng.uniform(static_cast<std::uint64_t>(k)));
    for (std::size_t t = 0; t < n; ++t) {
      plan.fold[order[t]] = static_cast<int>((offset + t) % static_cast<std::size_t>(k));
    }
    if (n < static_cast<std::size_t>(k)) {
      plan.warnings.push_back("row '" + m.row_labels()[i] + "' has " + std::to_string(n) +
                              " entries, fewer than " + std::to_string(k) + " folds");
    }
    pos += n;
  }
  return plan;
}

RatingMatrix FoldPlan::train(const RatingMatrix& m, int k) const {
  if (fold.size() != m.nnz()) throw ShapeError("fold plan does not match the matrix");
  std::vector<std::size_t> keep;
  keep.reserve(m.nnz());
  for (std::size_t p = 0; p < fold.size(); ++p) {
    if (fold[p] != k) keep.push_back(p);
  }
  return m.select_entries(keep);
}

std::vector<Entry> FoldPlan::test(const RatingMatrix& m, int k) const {
  if (fold.size() != m.nnz()) throw ShapeError("fold plan does not match the matrix");
  std::vector<Entry> out;
  const auto entries = m.entries();
  for (std::size_t p = 0; p < fold.size(); ++p) {
    if (fold[p] == k) out.push_back(entries[p]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string mode_name(BenchmarkMode mode) {
  return mode == BenchmarkMode::kBaseline ? "baseline" : "lmf";
}

BenchmarkMode parse_mode(const std::string& name) {
  if (name == "baseline") return BenchmarkMode::kBaseline;
  if (name == "lmf") return BenchmarkMode::kLmf;
  throw DomainError("unknown benchmark mode '" + name + "'");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Rethrows the active exception with the stage and fold prepended.
[[noreturn]] void rethrow_tagged(const std::string& stage, int fold) {
  const std::string tag = stage + " (fold " + std::to_string(fold) + "): ";
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), tag + e.what());
  }
}

}  // namespace

BenchmarkConfig BenchmarkConfig::from_json_text(const std::string& text) {
  BenchmarkConfig c;
  try {
    const json j = json::parse(text);
    c.dataset = j.at("dataset").get<std::string>();
    const std::string format = j.value("format", "tsv");
    if (format == "csv") {
      c.format = RatingLogFormat::kCsv;
    } else if (format != "tsv") {
      throw DomainError("unknown format '" + format + "'");
    }
    c.mode = parse_mode(j.value("mode", "lmf"));
    c.spec = FactorizerSpec::defaults(parse_algorithm(j.value("algorithm", "svd")));
    c.spec.rank = j.value("rank", c.spec.rank);
    c.spec.lambda = j.value("lambda", c.spec.lambda);
    c.spec.lambda_u = j.value("lambda_u", c.spec.lambda_u);
    c.spec.lambda_v = j.value("lambda_v", c.spec.lambda_v);
    c.spec.margin_c = j.value("margin_c", c.spec.margin_c);
    c.spec.learning_rate = j.value("learning_rate", c.spec.learning_rate);
    c.spec.max_iters = j.value("max_iters", c.spec.max_iters);
    c.spec.convergence_tol = j.value("convergence_tol", c.spec.convergence_tol);
    c.seed = j.value("seed", std::uint64_t{0});
    c.spec.seed = c.seed;
    c.permute = parse_permute_mode(j.value("permute", "balanced"));
    c.target_density = j.value("target_density", c.target_density);
    c.folds = j.value("folds", c.folds);
    c.max_folds = j.value("max_folds", c.max_folds);
    c.threads = j.value("threads", c.threads);
    c.cross_block = parse_cross_block_mode(j.value("cross_block", "bias"));
    c.dump_path = j.value("dump", "");
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad benchmark config: ") + e.what(), 0);
  }
  c.spec.validate();
  if (c.folds < 2) throw DomainError("folds must be at least 2");
  if (c.threads < 1) throw DomainError("threads must be at least 1");
  return c;
}

std::string BenchmarkConfig::to_json_text() const {
  json j = json::parse(spec_to_json_text(spec));
  j["dataset"] = dataset;
  j["format"] = format == RatingLogFormat::kCsv ? "csv" : "tsv";
  j["mode"] = mode_name(mode);
  j["permute"] = to_string(permute);
  j["target_density"] = target_density;
  j["folds"] = folds;
  j["max_folds"] = max_folds;
  j["threads"] = threads;
  j["seed"] = seed;
  j["cross_block"] = to_string(cross_block);
  if (!dump_path.empty()) j["dump"] = dump_path;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Protocol

BBDFTree build_tree(const RatingMatrix& train, const BenchmarkConfig& config,
                    FchrLog* log) {
  if (config.mode == BenchmarkMode::kBaseline) {
    return BBDFTree(train, config.permute, config.target_density, config.seed);
  }
  switch (config.permute) {
    case PermuteMode::kBbdf:
      return bbdf_permute(train, config.target_density, config.seed);
    case PermuteMode::kAbbdf:
      return abbdf_permute(train, config.target_density, config.seed);
    case PermuteMode::kBalanced: {
      BalancedResult r = balanced_permute(train, config.target_density, config.seed);
      if (log) *log = r.log;
      return std::move(r.tree);
    }
  }
  throw DomainError("unknown permute mode");
}

EvalReport run_benchmark(const BenchmarkConfig& config) {
  RatingMatrix m = load_ratings(config.dataset, config.format);
  return run_benchmark(config, m);
}

EvalReport run_benchmark(const BenchmarkConfig& config, const RatingMatrix& m) {
  EvalReport report;
  report.config = config;
  const FoldPlan plan = kfold_split(m, config.folds, config.seed);
  report.warnings = plan.warnings;

  std::ofstream dump;
  if (!config.dump_path.empty()) {
    dump.open(config.dump_path);
    if (!dump) throw std::runtime_error("cannot write '" + config.dump_path + "'");
    dump << std::setprecision(17);
    dump << "fold\trow\tcol\ttruth\tprediction\tvotes\n";
  }

  LMFOptions options;
  options.threads = config.threads;
  options.cross_block = config.cross_block;

  std::vector<std::pair<double, double>> pooled;
  std::size_t fallback_total = 0;
  const int n_folds = config.max_folds > 0 ? std::min(config.max_folds, config.folds)
                                           : config.folds;
  for (int k = 0; k < n_folds; ++k) {
    FoldReport fr;
    fr.fold = k;
    const RatingMatrix train = plan.train(m, k);
    const std::vector<Entry> test = plan.test(m, k);

    auto t0 = std::chrono::steady_clock::now();
    FchrLog log;
    BBDFTree tree;
    try {
      tree = build_tree(train, config, &log);
    } catch (...) {
      rethrow_tagged("permute", k);
    }
    fr.permute_seconds = seconds_since(t0);
    if (!log.first_choice.empty()) fr.fchr = fchr(log);

    LMFModel model;
    try {
      model = lmf_fit(tree, train, config.spec, options);
    } catch (...) {
      rethrow_tagged("fit", k);
    }
    fr.fit_seconds = model.fit_seconds;
    fr.blocks = model.blocks().size();
    std::uint64_t n_sum = 0, area_sum = 0;
    for (const BlockModel& b : model.blocks()) {
      fr.max_block_seconds = std::max(fr.max_block_seconds, b.fit_seconds);
      const std::uint64_t area = static_cast<std::uint64_t>(b.rows.size()) * b.cols.size();
      fr.block_densities.push_back(area ? static_cast<double>(b.entries) / area : 0.0);
      n_sum += b.entries;
      area_sum += area;
    }
    fr.assembled_density = area_sum ? static_cast<double>(n_sum) / area_sum : 0.0;

    t0 = std::chrono::steady_clock::now();
    std::vector<std::pair<double, double>> pairs;
    pairs.reserve(test.size());
    try {
      for (const Entry& e : test) {
        const CellPrediction c = model.predict_cell(e.row, e.col);
        pairs.emplace_back(e.value, c.value);
        if (c.votes == 0) ++fr.n_fallback;
        if (dump.is_open()) {
          dump << k << '\t' << m.row_labels()[e.row] << '\t' << m.col_labels()[e.col]
               << '\t' << e.value << '\t' << c.value << '\t' << c.votes << '\n';
        }
      }
    } catch (...) {
      rethrow_tagged("predict", k);
    }
    fr.predict_seconds = seconds_since(t0);
    fr.n_test = pairs.size();
    fr.rmse = rmse(pairs);
    pooled.insert(pooled.end(), pairs.begin(), pairs.end());
    fallback_total += fr.n_fallback;
    report.folds.push_back(std::move(fr));
  }
  report.n_test = pooled.size();
  report.rmse = rmse(pooled);
  double fold_sum = 0.0;
  for (const auto& f : report.folds) fold_sum += f.rmse;
  report.mean_fold_rmse = fold_sum / static_cast<double>(report.folds.size());
  report.fallback_fraction = static_cast<double>(fallback_total) / static_cast<double>(pooled.size());
  return report;
}

std::string EvalReport::to_json_text() const {
  json folds_json = json::array();
  for (const FoldReport& f : folds) {
    folds_json.push_back({{"fold", f.fold},
                          {"rmse", f.rmse},
                          {"n_test", f.n_test},
                          {"n_fallback", f.n_fallback},
                          {"permute_seconds", f.permute_seconds},
                          {"fit_seconds", f.fit_seconds},
                          {"max_block_seconds", f.max_block_seconds},
                          {"predict_seconds", f.predict_seconds},
                          {"blocks", f.blocks},
                          {"block_densities", f.block_densities},
                          {"assembled_density", f.assembled_density},
                          {"fchr", f.fchr >= 0 ? json(f.fchr) : json(nullptr)}});
  }
  json j = {{"config", json::parse(config.to_json_text())},
            {"rmse", rmse},
            {"mean_fold_rmse", mean_fold_rmse},
            {"fallback_fraction", fallback_fraction},
            {"n_test", n_test},
            {"clamped", true},
            {"folds", folds_json},
            {"warnings", warnings}};
  return j.dump(2);
}

void EvalReport::print_table(std::ostream& out) const {
  const auto flags = out.flags();
  out << std::fixed;
  out << "fold  blocks  asm_density  fchr   permute_s  fit_s    max_block_s  rmse    fallback\n";
  for (const FoldReport& f : folds) {
    out << std::setw(4) << f.fold << "  " << std::setw(6) << f.blocks << "  "
        << std::setprecision(5) << std::setw(11) << f.assembled_density << "  ";
    if (f.fchr >= 0) {
      out << std::setprecision(3) << std::setw(5) << f.fchr;
    } else {
      out << "    -";
    }
    out << "  " << std::setprecision(3) << std::setw(9) << f.permute_seconds << "  "
        << std::setw(7) << f.fit_seconds << "  " << std::setw(11) << f.max_block_seconds
        << "  " << std::setprecision(4) << std::setw(6) << f.rmse << "  "
        << std::setw(8) << static_cast<double>(f.n_fallback) / std::max<std::size_t>(f.n_test, 1)
        << '\n';
  }
  out << "pooled rmse " << std::setprecision(4) << rmse << "  mean fold rmse "
      << mean_fold_rmse << "  fallback fraction " << std::setprecision(5)
      << fallback_fraction << "  (predictions clamped to the rating scale)\n";
  out.flags(flags);
}

}  // namespace lmf
