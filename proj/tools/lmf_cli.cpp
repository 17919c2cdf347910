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

// `lmf` command-line tool. Exit codes: 0 ok, 2 bad input, 3 divergence,
// 4 degenerate input, 1 anything else.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lmf/bbdf.hpp"
#include "lmf/errors.hpp"
#include "lmf/eval.hpp"
#include "lmf/factorize.hpp"
#include "lmf/localized.hpp"
#include "lmf/sparse.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitDegenerate = 4;

int default_threads() {
  if (const char* env = std::getenv("LMF_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring LMF_THREADS='" << env << "'\n";
  }
  return 1;
}

lmf::RatingLogFormat parse_format(const std::string& name) {
  if (name == "tsv" || name == "whitespace") return lmf::RatingLogFormat::kWhitespace;
  if (name == "csv") return lmf::RatingLogFormat::kCsv;
  throw lmf::ParseError("unknown format '" + name + "' (expected tsv or csv)");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw lmf::ParseError("cannot write '" + path + "'");
  return out;
}

// (user, item) pairs, one per line; extra fields are ignored.
std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lmf::ParseError("cannot open '" + path + "'");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string user, item;
    if (!(fields >> user) || user.front() == '#') continue;
    if (!(fields >> item)) throw lmf::ParseError("expected 'user item'", line_no);
    pairs.emplace_back(std::move(user), std::move(item));
  }
  return pairs;
}

// Predicts by label. Labels the model never saw get the bias terms that are
// known, so an entirely new pair gets the global mean.
class LabelPredictor {
 public:
  explicit LabelPredictor(const lmf::LMFModel& model)
      : model_(model),
        rows_(lmf::make_label_index(model.tree().row_labels)),
        cols_(lmf::make_label_index(model.tree().col_labels)) {}

  lmf::CellPrediction operator()(const std::string& user, const std::string& item) const {
    const auto r = rows_.find(user);
    const auto c = cols_.find(item);
    if (r != rows_.end() && c != cols_.end()) return model_.predict_cell(r->second, c->second);
    const lmf::BiasModel& bias = model_.fallback();
    double v = bias.mean;
    if (r != rows_.end()) v += bias.row_bias[r->second];
    if (c != cols_.end()) v += bias.col_bias[c->second];
    return {std::clamp(v, model_.rating_lo(), model_.rating_hi()), 0};
  }

 private:
  const lmf::LMFModel& model_;
  lmf::LabelIndex rows_;
  lmf::LabelIndex cols_;
};

void check_tree_matches(const lmf::BBDFTree& tree, const lmf::RatingMatrix& m) {
  if (tree.n_rows != m.n_rows() || tree.n_cols != m.n_cols() ||
      tree.row_labels != m.row_labels() || tree.col_labels != m.col_labels()) {
    throw lmf::ShapeError("tree was built for a different rating log");
  }
}

// ---------------------------------------------------------------------------

struct SplitArgs {
  std::string input, format = "tsv", out;
  int folds = 5;
  std::uint64_t seed = 0;
};

void run_split(const SplitArgs& a) {
  const lmf::RatingMatrix m = lmf::load_ratings(a.input, parse_format(a.format));
  const lmf::FoldPlan plan = lmf::kfold_split(m, a.folds, a.seed);
  for (const auto& w : plan.warnings) std::cerr << "warning: " << w << '\n';
  fs::create_directories(a.out);
  for (int k = 0; k < a.folds; ++k) {
    const fs::path dir = fs::path(a.out) / ("fold_" + std::to_string(k));
    fs::create_directories(dir);
    auto train = open_out((dir / "train.tsv").string());
    lmf::write_ratings(train, plan.train(m, k));
    auto test = open_out((dir / "test.tsv").string());
    test << std::setprecision(17);
    for (const lmf::Entry& e : plan.test(m, k)) {
      test << m.row_labels()[e.row] << '\t' << m.col_labels()[e.col] << '\t' << e.value << '\n';
    }
  }
  std::cout << "wrote " << a.folds << " folds of " << m.nnz() << " entries to " << a.out << '\n';
}

struct PermuteArgs {
  std::string input, format = "tsv", mode = "balanced", out;
  double target_density = 0.08;
  std::uint64_t seed = 0;
  double balance_tol = 0.2;
  int max_blocks = 0;
};

void run_permute(const PermuteArgs& a) {
  const lmf::RatingMatrix m = lmf::load_ratings(a.input, parse_format(a.format));
  const lmf::PermuteMode mode = lmf::parse_permute_mode(a.mode);
  const lmf::PermuteOptions options{a.balance_tol, a.max_blocks};
  lmf::FchrLog log;
  const auto start = std::chrono::steady_clock::now();
  lmf::BBDFTree tree;
  switch (mode) {
    case lmf::PermuteMode::kBbdf:
      tree = lmf::bbdf_permute(m, a.target_density, a.seed, options);
      break;
    case lmf::PermuteMode::kAbbdf:
      tree = lmf::abbdf_permute(m, a.target_density, a.seed, options);
      break;
    case lmf::PermuteMode::kBalanced: {
      auto result = lmf::balanced_permute(m, a.target_density, a.seed, options);
      tree = std::move(result.tree);
      log = std::move(result.log);
      break;
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  lmf::save_tree(a.out, tree);
  std::cout << "mode " << lmf::to_string(tree.mode) << ": " << tree.leaf_count()
            << " blocks, " << tree.dropped_count() << " dropped entries, " << std::fixed
            << std::setprecision(3) << seconds << " s\n";
  if (!log.first_choice.empty()) std::cout << "fchr " << lmf::fchr(log) << '\n';
}

struct AnalyzeArgs {
  std::string tree, input, format = "tsv";
};

void run_analyze(const AnalyzeArgs& a) {
  const lmf::BBDFTree tree = lmf::load_tree(a.tree);
  json out;
  out["mode"] = lmf::to_string(tree.mode);
  out["target_density"] = tree.target_density;
  out["seed"] = tree.seed;
  out["rows"] = tree.n_rows;
  out["cols"] = tree.n_cols;
  out["nodes"] = tree.nodes.size();
  out["blocks"] = tree.leaf_count();
  out["dropped"] = tree.dropped_count();
  int depth = 0;
  for (const auto& n : tree.nodes) depth = std::max(depth, n.depth);
  out["depth"] = depth;

  if (!a.input.empty()) {
    const lmf::RatingMatrix m = lmf::load_ratings(a.input, parse_format(a.format));
    check_tree_matches(tree, m);
    out["matrix_density"] = lmf::density(lmf::SubmatrixView::full(m));
    const std::string violation = lmf::validate_tree(tree, m);
    out["valid"] = violation.empty();
    if (!violation.empty()) out["violation"] = violation;
    const lmf::EntryAccounting acc = lmf::account_entries(tree, m);
    out["entries"] = {{"in_leaves", acc.in_leaves},
                      {"on_borders", acc.on_borders},
                      {"dropped", acc.dropped}};
    const auto blocks = lmf::assemble_blocks(tree, m);
    json list = json::array();
    for (const auto& b : blocks) {
      const double area = static_cast<double>(b.rows.size()) * b.cols.size();
      list.push_back({{"leaf", b.leaf},
                      {"rows", b.rows.size()},
                      {"cols", b.cols.size()},
                      {"entries", b.local.nnz()},
                      {"density", area > 0 ? b.local.nnz() / area : 0.0}});
    }
    out["assembled"] = list;
    out["assembled_density"] = lmf::assembled_density(blocks);
    // The round log is not persisted; a balanced tree is rebuilt from its
    // seed and target to recover it.
    if (tree.mode == lmf::PermuteMode::kBalanced) {
      const auto rerun = lmf::balanced_permute(m, tree.target_density, tree.seed);
      if (rerun.tree.leaf_count() == tree.leaf_count() && !rerun.log.first_choice.empty()) {
        out["fchr"] = lmf::fchr(rerun.log);
        out["rounds"] = rerun.log.first_choice.size();
      }
    }
  }
  std::cout << out.dump(2) << '\n';
}

struct FitArgs {
  std::string input, format = "tsv", tree, algo = "svd", out, cross_block = "bias";
  int factors = 60;
  double reg = -1, reg_u = -1, reg_v = -1, margin_c = -1, lr = -1, tol = -1;
  int iters = -1;
  int threads = 1;
  std::uint64_t seed = 0;
  bool deterministic = false;
};

lmf::FactorizerSpec spec_from(const FitArgs& a) {
  lmf::FactorizerSpec spec = lmf::FactorizerSpec::defaults(lmf::parse_algorithm(a.algo));
  spec.rank = a.factors;
  spec.seed = a.seed;
  if (a.reg >= 0) {
    spec.lambda = a.reg;
    spec.lambda_u = a.reg;
    spec.lambda_v = a.reg;
  }
  if (a.reg_u >= 0) spec.lambda_u = a.reg_u;
  if (a.reg_v >= 0) spec.lambda_v = a.reg_v;
  if (a.margin_c >= 0) spec.margin_c = a.margin_c;
  if (a.lr >= 0) spec.learning_rate = a.lr;
  if (a.iters >= 0) spec.max_iters = a.iters;
  if (a.tol >= 0) spec.convergence_tol = a.tol;
  spec.validate();
  return spec;
}

void run_fit(const FitArgs& a) {
  const lmf::RatingMatrix m = lmf::load_ratings(a.input, parse_format(a.format));
  lmf::BBDFTree tree;
  if (a.tree.empty()) {
    tree = lmf::BBDFTree(m, lmf::PermuteMode::kBbdf, 0.0, a.seed);
  } else {
    tree = lmf::load_tree(a.tree);
    check_tree_matches(tree, m);
  }
  lmf::LMFOptions options;
  options.threads = a.threads;
  options.deterministic = a.deterministic;
  options.cross_block = lmf::parse_cross_block_mode(a.cross_block);
  const lmf::LMFModel model = lmf::lmf_fit(tree, m, spec_from(a), options);
  lmf::save_model(a.out, model);
  std::size_t unconverged = 0;
  for (const auto& b : model.blocks()) unconverged += !b.factors.converged;
  std::cout << model.blocks().size() << " blocks fit in " << std::fixed << std::setprecision(3)
            << model.fit_seconds << " s";
  if (unconverged > 0) std::cout << " (" << unconverged << " stopped at max_iters)";
  std::cout << "; model in " << a.out << '\n';
}

struct PredictArgs {
  std::string model, pairs, out;
};

void run_predict(const PredictArgs& a) {
  const lmf::LMFModel model = lmf::load_model(a.model);
  const LabelPredictor predict(model);
  auto out = open_out(a.out);
  out << std::setprecision(17);
  for (const auto& [user, item] : read_pairs(a.pairs)) {
    out << user << '\t' << item << '\t' << predict(user, item).value << '\n';
  }
}

struct EvalArgs {
  std::string model, test, format = "tsv";
};

void run_eval(const EvalArgs& a) {
  const lmf::LMFModel model = lmf::load_model(a.model);
  const LabelPredictor predict(model);
  // The test log is read with its own id space; only labels are compared.
  const lmf::RatingMatrix test = lmf::load_ratings(a.test, parse_format(a.format));
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(test.nnz());
  lmf::FoldReport fold;
  for (const lmf::Entry& e : test.entries()) {
    const lmf::CellPrediction p =
        predict(test.row_labels()[e.row], test.col_labels()[e.col]);
    pairs.emplace_back(e.value, p.value);
    fold.n_fallback += p.votes == 0;
  }
  fold.predict_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fold.rmse = lmf::rmse(pairs);
  fold.n_test = pairs.size();
  fold.fit_seconds = model.fit_seconds;
  fold.blocks = model.blocks().size();
  double entries = 0.0, area = 0.0;
  for (const auto& b : model.blocks()) {
    const double block_area = static_cast<double>(b.rows.size()) * b.cols.size();
    fold.block_densities.push_back(block_area > 0 ? b.entries / block_area : 0.0);
    fold.max_block_seconds = std::max(fold.max_block_seconds, b.fit_seconds);
    entries += b.entries;
    area += block_area;
  }
  fold.assembled_density = area > 0 ? entries / area : 0.0;

  lmf::EvalReport report;
  report.config.dataset = a.test;
  report.config.mode =
      model.blocks().size() == 1 ? lmf::BenchmarkMode::kBaseline : lmf::BenchmarkMode::kLmf;
  report.config.spec = model.spec();
  report.config.permute = model.tree().mode;
  report.config.target_density = model.tree().target_density;
  report.config.folds = 1;
  report.config.seed = model.spec().seed;
  report.config.threads = model.options().threads;
  report.config.cross_block = model.options().cross_block;
  report.rmse = fold.rmse;
  report.mean_fold_rmse = fold.rmse;
  report.n_test = fold.n_test;
  report.fallback_fraction = static_cast<double>(fold.n_fallback) / fold.n_test;
  report.folds.push_back(std::move(fold));
  std::cout << report.to_json_text() << '\n';
}

struct BenchArgs {
  std::string config, json_out;
  int threads = 0;
};

void run_bench(const BenchArgs& a, int env_threads) {
  std::ifstream in(a.config);
  if (!in) throw lmf::ParseError("cannot open '" + a.config + "'");
  std::stringstream text;
  text << in.rdbuf();
  lmf::BenchmarkConfig config = lmf::BenchmarkConfig::from_json_text(text.str());
  // Config values win over the environment; --threads wins over both.
  if (!json::parse(text.str()).contains("threads")) config.threads = env_threads;
  if (a.threads > 0) config.threads = a.threads;
  const lmf::EvalReport report = lmf::run_benchmark(config);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  report.print_table(std::cout);
  if (!a.json_out.empty()) {
    auto out = open_out(a.json_out);
    out << report.to_json_text() << '\n';
  } else {
    std::cout << report.to_json_text() << '\n';
  }
}

int exit_code(lmf::ErrorKind kind) {
  switch (kind) {
    case lmf::ErrorKind::kInput:
      return kExitInput;
    case lmf::ErrorKind::kDivergence:
      return kExitDivergence;
    case lmf::ErrorKind::kDegenerate:
      return kExitDegenerate;
  }
  return kExitOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized matrix factorization for rating prediction"};
  app.require_subcommand(1);
  const int env_threads = default_threads();
  const std::vector<std::string> algos = {"svd", "nmf", "pmf", "mmmf"};

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Write stratified k-fold train/test files");
  split_cmd->add_option("--input", split.input, "Rating log")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--format", split.format, "tsv or csv");
  split_cmd->add_option("--folds", split.folds, "Number of folds")->check(CLI::Range(2, 1000));
  split_cmd->add_option("--seed", split.seed, "Shuffle seed");
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  PermuteArgs permute;
  auto* permute_cmd = app.add_subcommand("permute", "Build a block tree and save it as JSON");
  permute_cmd->add_option("--input", permute.input, "Rating log")->required()->check(CLI::ExistingFile);
  permute_cmd->add_option("--format", permute.format, "tsv or csv");
  permute_cmd->add_option("--mode", permute.mode, "bbdf, abbdf or balanced")
      ->check(CLI::IsMember({"bbdf", "abbdf", "balanced"}));
  permute_cmd->add_option("--target-density", permute.target_density, "Stopping density");
  permute_cmd->add_option("--seed", permute.seed, "Partitioner seed");
  permute_cmd->add_option("--balance-tol", permute.balance_tol, "Bisection imbalance allowed");
  permute_cmd->add_option("--max-blocks", permute.max_blocks, "Balanced mode block cap");
  permute_cmd->add_option("--out", permute.out, "Tree JSON path")->required();

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Print block statistics for a tree");
  analyze_cmd->add_option("--tree", analyze.tree, "Tree JSON")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--input", analyze.input, "Rating log the tree was built from")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--format", analyze.format, "tsv or csv");

  FitArgs fit;
  fit.threads = env_threads;
  auto* fit_cmd = app.add_subcommand("fit", "Factorize every block and save the model");
  fit_cmd->add_option("--input", fit.input, "Training rating log")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--format", fit.format, "tsv or csv");
  fit_cmd->add_option("--tree", fit.tree, "Tree JSON; omit for one whole-matrix block")
      ->check(CLI::ExistingFile);
  fit_cmd->add_option("--algo", fit.algo, "svd, nmf, pmf or mmmf")->check(CLI::IsMember(algos));
  fit_cmd->add_option("--factors", fit.factors, "Rank")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--reg", fit.reg, "Regularization weight (all factors)");
  fit_cmd->add_option("--reg-u", fit.reg_u, "Row factor weight (pmf)");
  fit_cmd->add_option("--reg-v", fit.reg_v, "Column factor weight (pmf)");
  fit_cmd->add_option("--margin-c", fit.margin_c, "Loss weight (mmmf)");
  fit_cmd->add_option("--lr", fit.lr, "Learning rate (pmf, mmmf)");
  fit_cmd->add_option("--iters", fit.iters, "Maximum iterations or epochs");
  fit_cmd->add_option("--tol", fit.tol, "Relative objective change to stop at");
  fit_cmd->add_option("--threads", fit.threads, "Worker threads (default $LMF_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.seed, "Initialization seed");
  fit_cmd->add_flag("--deterministic", fit.deterministic, "Record the run as deterministic");
  fit_cmd->add_option("--cross-block", fit.cross_block, "bias or factor_product")
      ->check(CLI::IsMember({"bias", "factor_product"}));
  fit_cmd->add_option("--out", fit.out, "Model directory")->required();

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Predict ratings for user/item pairs");
  predict_cmd->add_option("--model", predict.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--pairs", predict.pairs, "File of 'user item' lines")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", predict.out, "Output 'user item prediction' TSV")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model on a test log (JSON to stdout)");
  eval_cmd->add_option("--model", eval.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--test", eval.test, "Test rating log")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--format", eval.format, "tsv or csv");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run the cross-validation benchmark");
  bench_cmd->add_option("--config", bench.config, "Benchmark JSON")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--threads", bench.threads, "Override the config's thread count");
  bench_cmd->add_option("--json", bench.json_out, "Write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*split_cmd) run_split(split);
    if (*permute_cmd) run_permute(permute);
    if (*analyze_cmd) run_analyze(analyze);
    if (*fit_cmd) run_fit(fit);
    if (*predict_cmd) run_predict(predict);
    if (*eval_cmd) run_eval(eval);
    if (*bench_cmd) run_bench(bench, env_threads);
  } catch (const lmf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return 0;
}
