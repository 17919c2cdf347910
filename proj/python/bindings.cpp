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


#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lmf/errors.hpp"
#include "lmf/eval.hpp"

namespace py = pybind11;
using namespace lmf;

namespace {

RatingMatrix matrix_from_triples(Index n_rows, Index n_cols,
                                 const std::vector<Index>& rows,
                                 const std::vector<Index>& cols,
                                 const std::vector<double>& values) {
  if (rows.size() != cols.size() || rows.size() != values.size()) {
    throw ShapeError("rows, cols and values differ in length");
  }
  std::vector<Entry> e(rows.size());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = {rows[k], cols[k], values[k]};
  return RatingMatrix(n_rows, n_cols, std::move(e));
}

struct PermuteOutcome {
  BBDFTree tree;
  double fchr = -1.0;  // balanced mode only
};

PermuteOutcome permute(const RatingMatrix& m, const std::string& mode,
                       double target, std::uint64_t seed, double balance_tol,
                       int max_blocks) {
  PermuteOptions options;
  options.balance_tol = balance_tol;
  options.max_blocks = max_blocks;
  switch (parse_permute_mode(mode)) {
    case PermuteMode::kBbdf:
      return {bbdf_permute(m, target, seed, options)};
    case PermuteMode::kAbbdf:
      return {abbdf_permute(m, target, seed, options)};
    case PermuteMode::kBalanced: {
      BalancedResult r = balanced_permute(m, target, seed, options);
      PermuteOutcome out{std::move(r.tree)};
      if (!r.log.first_choice.empty()) out.fchr = fchr(r.log);
      return out;
    }
  }
  throw DomainError("unknown permute mode");
}

std::string tree_json(const BBDFTree& tree) {
  std::ostringstream out;
  write_tree_json(out, tree);
  return out.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Block-reordered localized matrix factorization.";

  // Translators are tried newest first, so the base class goes in first.
  auto& base = py::register_exception<Error>(m, "LmfError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", base.ptr());

  py::class_<RatingMatrix>(m, "RatingMatrix")
      .def(py::init(&matrix_from_triples), py::arg("n_rows"), py::arg("n_cols"),
           py::arg("rows"), py::arg("cols"), py::arg("values"))
      .def_property_readonly("n_rows", &RatingMatrix::n_rows)
      .def_property_readonly("n_cols", &RatingMatrix::n_cols)
      .def_property_readonly("nnz", &RatingMatrix::nnz)
      .def_property_readonly("row_labels", &RatingMatrix::row_labels)
      .def_property_readonly("col_labels", &RatingMatrix::col_labels)
      .def("entries",
           [](const RatingMatrix& self) {
             std::vector<std::tuple<Index, Index, double>> out;
             out.reserve(self.nnz());
             for (const Entry& e : self.entries()) out.emplace_back(e.row, e.col, e.value);
             return out;
           })
      .def("density", [](const RatingMatrix& self) {
        return density(SubmatrixView::full(self));
      });

  m.def(
      "load_ratings",
      [](const std::string& path, const std::string& format) {
        if (format != "tsv" && format != "csv") throw DomainError("format must be tsv or csv");
        return load_ratings(path, format == "csv" ? RatingLogFormat::kCsv
                                                  : RatingLogFormat::kWhitespace);
      },
      py::arg("path"), py::arg("format") = "tsv");

  py::class_<BBDFTree>(m, "Tree")
      .def_property_readonly("mode", [](const BBDFTree& t) { return to_string(t.mode); })
      .def_property_readonly("n_rows", [](const BBDFTree& t) { return t.n_rows; })
      .def_property_readonly("n_cols", [](const BBDFTree& t) { return t.n_cols; })
      .def_property_readonly("node_count", [](const BBDFTree& t) { return t.nodes.size(); })
      .def_property_readonly("leaf_count", &BBDFTree::leaf_count)
      .def_property_readonly("dropped_count", &BBDFTree::dropped_count)
      .def("leaf_indices",
           [](const BBDFTree& t) {
             std::vector<std::pair<std::vector<Index>, std::vector<Index>>> out;
             for (int id : t.leaves()) out.emplace_back(t.node(id).rows, t.node(id).cols);
             return out;
           })
      .def("permutation",
           [](const BBDFTree& t) {
             IndexPermutation p = t.permutation();
             return std::make_pair(p.row_perm, p.col_perm);
           })
      .def("to_json", &tree_json);

  m.def(
      "permute",
      [](const RatingMatrix& matrix, double target, const std::string& mode,
         std::uint64_t seed, double balance_tol, int max_blocks) {
        PermuteOutcome r = permute(matrix, mode, target, seed, balance_tol, max_blocks);
        return std::make_pair(std::move(r.tree), r.fchr);
      },
      py::arg("matrix"), py::arg("target_density"), py::arg("mode") = "balanced",
      py::arg("seed") = 0, py::arg("balance_tol") = 0.2, py::arg("max_blocks") = 0,
      "Returns (tree, fchr); fchr is -1 outside balanced mode.");

  py::class_<FactorizerSpec>(m, "FactorizerSpec")
      .def(py::init([](const std::string& algorithm) {
             return FactorizerSpec::defaults(parse_algorithm(algorithm));
           }),
           py::arg("algorithm") = "svd_als")
      .def_property_readonly("algorithm",
                             [](const FactorizerSpec& s) { return to_string(s.algorithm); })
      .def_readwrite("rank", &FactorizerSpec::rank)
      .def_readwrite("reg", &FactorizerSpec::lambda)
      .def_readwrite("reg_u", &FactorizerSpec::lambda_u)
      .def_readwrite("reg_v", &FactorizerSpec::lambda_v)
      .def_readwrite("margin_c", &FactorizerSpec::margin_c)
      .def_readwrite("learning_rate", &FactorizerSpec::learning_rate)
      .def_readwrite("max_iters", &FactorizerSpec::max_iters)
      .def_readwrite("convergence_tol", &FactorizerSpec::convergence_tol)
      .def_readwrite("seed", &FactorizerSpec::seed)
      .def("to_json", &spec_to_json_text);

  py::class_<FactorPair>(m, "Factors")
      .def_property_readonly("U", [](const FactorPair& f) { return f.U; })
      .def_property_readonly("V", [](const FactorPair& f) { return f.V; })
      .def_readonly("objective_history", &FactorPair::objective_history)
      .def_readonly("iterations", &FactorPair::iterations)
      .def_readonly("converged", &FactorPair::converged)
      .def("predict", &predict_entry, py::arg("row"), py::arg("col"));

  m.def("factorize",
        [](const RatingMatrix& matrix, const FactorizerSpec& spec) {
          py::gil_scoped_release release;
          return factorize(matrix, spec);
        },
        py::arg("matrix"), py::arg("spec"));

  py::class_<LMFModel>(m, "LocalizedModel")
      .def_property_readonly("n_blocks", [](const LMFModel& s) { return s.blocks().size(); })
      .def_property_readonly("tree", &LMFModel::tree, py::return_value_policy::copy)
      .def_readonly("fit_seconds", &LMFModel::fit_seconds)
      .def("predict", &LMFModel::predict, py::arg("row"), py::arg("col"))
      .def("votes", [](const LMFModel& s, Index i, Index j) { return s.predict_cell(i, j).votes; },
           py::arg("row"), py::arg("col"))
      .def("save", [](const LMFModel& s, const std::string& dir) { save_model(dir, s); });

  m.def(
      "fit_localized",
      [](const BBDFTree& tree, const RatingMatrix& matrix, const FactorizerSpec& spec,
         int threads, bool deterministic, const std::string& cross_block) {
        LMFOptions options;
        options.threads = threads;
        options.deterministic = deterministic;
        options.cross_block = parse_cross_block_mode(cross_block);
        py::gil_scoped_release release;
        return lmf_fit(tree, matrix, spec, options);
      },
      py::arg("tree"), py::arg("matrix"), py::arg("spec"), py::arg("threads") = 1,
      py::arg("deterministic") = true, py::arg("cross_block") = "bias");

  m.def("load_model", &load_model, py::arg("dir"));

  m.def("rmse", [](const std::vector<std::pair<double, double>>& pairs) { return rmse(pairs); },
        py::arg("pairs"));

  m.def(
      "run_benchmark_json",
      [](const std::string& config_json) {
        BenchmarkConfig config = BenchmarkConfig::from_json_text(config_json);
        py::gil_scoped_release release;
        return run_benchmark(config).to_json_text();
      },
      py::arg("config_json"));
}
