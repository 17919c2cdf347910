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

// Matrix factorization over observed entries only.
//
// Every algorithm here minimizes a loss summed over observed cells plus a
// regularizer summed over factor rows, so the objective of a block-diagonal
// matrix is the sum of the per-block objectives. Factor initialization and
// the SGD visiting order are derived from row and column labels, which makes
// a run on a block start exactly where the same rows and columns would start
// inside a larger matrix.
//
// Objectives (n_i, n_j are observed counts of row i and column j):
//   SVD_ALS    sum (x - u.v)^2 + lambda * (sum n_i |u_i|^2 + sum n_j |v_j|^2)
//   NMF        same objective, U, V >= 0, multiplicative updates
//   PMF_SGD    1/2 sum (x - u.v)^2
//                + 1/2 (lambda_u sum n_i |u_i|^2 + lambda_v sum n_j |v_j|^2)
//   MMMF_FAST  C * sum_k h(T_k (theta_ik - u.v))
//                + 1/2 (sum n_i |u_i|^2 + sum n_j |v_j|^2)
//              with the smooth hinge h and per-row ordinal thresholds theta.
// The count weighting keeps each row's penalty proportional to the evidence
// for it; rows without entries get zero factors.

#ifndef LMF_FACTORIZE_HPP_
#define LMF_FACTORIZE_HPP_

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "lmf/sparse.hpp"

namespace lmf {

enum class Algorithm { kSvdAls, kNmf, kPmfSgd, kMmmfFast };

std::string to_string(Algorithm algorithm);
// Accepts SVD_ALS / svd, NMF / nmf, PMF_SGD / pmf, MMMF_FAST / mmmf.
Algorithm parse_algorithm(const std::string& name);

struct FactorizerSpec {
  Algorithm algorithm = Algorithm::kSvdAls;
  int rank = 60;
  double lambda = 0.065;     // SVD_ALS, NMF
  double lambda_u = 0.1;     // PMF_SGD
  double lambda_v = 0.1;     // PMF_SGD
  double margin_c = 5.0;     // MMMF_FAST loss weight
  double learning_rate = 0.005;  // SGD algorithms
  // MMMF rating scale; integer levels scale_min..scale_max. Derived from the
  // data when scale_max <= scale_min.
  double scale_min = 0.0;
  double scale_max = 0.0;
  int max_iters = 200;
  double convergence_tol = 1e-5;  // relative objective change
  std::uint64_t seed = 0;

  // Tuned hyperparameters for each algorithm.
  static FactorizerSpec defaults(Algorithm algorithm);
  // Throws DomainError on r < 1, negative weights or non-positive iteration
  // limits.
  void validate() const;
};

using FactorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FactorPair {
  Algorithm algorithm = Algorithm::kSvdAls;
  FactorMatrix U;  // n_rows x r
  FactorMatrix V;  // n_cols x r
  // MMMF only: n_rows x (levels - 1) ordinal thresholds, ascending per row.
  FactorMatrix thresholds;
  double rating_min = 1.0;  // MMMF level 0
  std::vector<double> objective_history;  // after init, then each iteration
  double final_objective = 0.0;
  int iterations = 0;
  bool converged = false;

  int rank() const { return static_cast<int>(U.cols()); }
  Index n_rows() const { return static_cast<Index>(U.rows()); }
  Index n_cols() const { return static_cast<Index>(V.rows()); }
};

// Called after every iteration with the current factors.
using IterationObserver = std::function<void(int iteration, const FactorPair&)>;

FactorPair factorize(const RatingMatrix& m, const FactorizerSpec& spec,
                     const IterationObserver& observer = {});

// Raw prediction: u.v for SVD, NMF and PMF; for MMMF the level implied by the
// row thresholds. Throws ShapeError when out of range.
double predict_entry(const FactorPair& f, Index i, Index j);
// Same without range checks, for hot loops.
double predict_unchecked(const FactorPair& f, Index i, Index j);

// NMF factors must be non-negative; the other algorithms are unconstrained.
bool satisfies_constraints(const FactorPair& f);

inline double clamp_rating(double value, double lo, double hi) {
  return value < lo ? lo : (value > hi ? hi : value);
}

double objective_value(const RatingMatrix& m, const FactorPair& f,
                       const FactorizerSpec& spec);
// Regularizer term alone; per-row counts come from `m`.
double regularizer_value(const RatingMatrix& m, const FactorPair& f,
                         const FactorizerSpec& spec);

// Binary factor file plus "<path>.json" sidecar holding the spec and the
// objective history.
void save_factors(const std::string& path, const FactorPair& f,
                  const FactorizerSpec& spec);
FactorPair load_factors(const std::string& path,
                        FactorizerSpec* spec = nullptr);

// Spec as a JSON object text, and back. Parsing throws ParseError.
std::string spec_to_json_text(const FactorizerSpec& spec);
FactorizerSpec spec_from_json_text(const std::string& text);

void write_factors(std::ostream& out, const FactorPair& f);
FactorPair read_factors(std::istream& in);

}  // namespace lmf

#endif  // LMF_FACTORIZE_HPP_
