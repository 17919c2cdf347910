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

#include "lmf/factorize.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "lmf/errors.hpp"
#include "lmf/rng.hpp"

namespace lmf {

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kSvdAls: return "SVD_ALS";
    case Algorithm::kNmf: return "NMF";
    case Algorithm::kPmfSgd: return "PMF_SGD";
    case Algorithm::kMmmfFast: return "MMMF_FAST";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& name) {
  std::string n;
  for (char c : name) n.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (n == "svd_als" || n == "svd") return Algorithm::kSvdAls;
  if (n == "nmf") return Algorithm::kNmf;
  if (n == "pmf_sgd" || n == "pmf") return Algorithm::kPmfSgd;
  if (n == "mmmf_fast" || n == "mmmf") return Algorithm::kMmmfFast;
  throw DomainError("unknown algorithm '" + name + "'");
}

FactorizerSpec FactorizerSpec::defaults(Algorithm algorithm) {
  FactorizerSpec s;
  s.algorithm = algorithm;
  switch (algorithm) {
    case Algorithm::kSvdAls:
    case Algorithm::kNmf:
      s.lambda = 0.065;
      break;
    case Algorithm::kPmfSgd:
      s.lambda_u = s.lambda_v = 0.1;
      s.learning_rate = 0.005;
      break;
    case Algorithm::kMmmfFast:
      s.margin_c = 5.0;
      s.learning_rate = 0.002;
      break;
  }
  return s;
}

void FactorizerSpec::validate() const {
  if (rank < 1) throw DomainError("factor count must be at least 1");
  if (!(lambda >= 0) || !(lambda_u >= 0) || !(lambda_v >= 0) || !(margin_c >= 0)) {
    throw DomainError("regularization weights must be non-negative");
  }
  if (max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (!(convergence_tol >= 0)) throw DomainError("convergence_tol must be non-negative");
  if ((algorithm == Algorithm::kPmfSgd || algorithm == Algorithm::kMmmfFast) &&
      !(learning_rate > 0)) {
    throw DomainError("learning_rate must be positive");
  }
}

namespace {

constexpr std::uint64_t kRowSalt = 0x726f77735f696e69ULL;
constexpr std::uint64_t kColSalt = 0x636f6c735f696e69ULL;

// Observed entries indexed both ways: for every row the (col, value) pairs in
// column order, and for every column the (row, value) pairs in row order.
struct Adjacency {
  std::vector<std::size_t> ptr{0};
  std::vector<Index> idx;
  std::vector<double> val;

  std::size_t count(Index t) const { return ptr[t + 1] - ptr[t]; }
};

struct Observed {
  Adjacency by_row;
  Adjacency by_col;
};

Observed index_entries(const RatingMatrix& m) {
  Observed o;
  o.by_row.ptr.reserve(static_cast<std::size_t>(m.n_rows()) + 1);
  for (Index i = 0; i < m.n_rows(); ++i) {
    for (const Entry& e : m.row(i)) {
      o.by_row.idx.push_back(e.col);
      o.by_row.val.push_back(e.value);
    }
    o.by_row.ptr.push_back(o.by_row.idx.size());
  }
  const auto entries = m.entries();
  for (Index j = 0; j < m.n_cols(); ++j) {
    for (std::uint32_t pos : m.col_entries(j)) {
      o.by_col.idx.push_back(entries[pos].row);
      o.by_col.val.push_back(entries[pos].value);
    }
    o.by_col.ptr.push_back(o.by_col.idx.size());
  }
  return o;
}

struct Scale {
  double min = 1.0;
  int levels = 5;
};

Scale rating_scale(const RatingMatrix& m, const FactorizerSpec& spec) {
  double lo = spec.scale_min, hi = spec.scale_max;
  if (!(hi > lo)) {
    lo = std::floor(m.min_value());
    hi = std::ceil(m.max_value());
  }
  Scale s;
  s.min = lo;
  s.levels = std::max(2, static_cast<int>(std::lround(hi - lo)) + 1);
  return s;
}

int level_of(double value, const Scale& s) {
  long k = std::lround(value - s.min);
  return static_cast<int>(std::clamp<long>(k, 0, s.levels - 1));
}

void init_factor_rows(FactorMatrix& f, const std::vector<std::string>& labels,
                      const Adjacency& adj, const FactorizerSpec& spec,
                      std::uint64_t salt) {
  const int r = spec.rank;
  const double scale = 1.0 / std::sqrt(static_cast<double>(r));
  for (Index t = 0; t < f.rows(); ++t) {
    if (adj.count(t) == 0) {
      f.row(t).setZero();
      continue;
    }
    Rng rng(mix64(spec.seed ^ salt) ^ hash_string(labels[t]));
    for (int k = 0; k < r; ++k) {
      f(t, k) = spec.algorithm == Algorithm::kNmf ? rng.unit() * scale
                                                  : rng.normal() * scale;
    }
  }
}

// Smooth hinge and its derivative.
double smooth_hinge(double z) {
  if (z <= 0) return 0.5 - z;
  if (z < 1) return 0.5 * (1 - z) * (1 - z);
  return 0.0;
}
double smooth_hinge_grad(double z) {
  if (z <= 0) return -1.0;
  if (z < 1) return z - 1.0;
  return 0.0;
}

double mmmf_level_prediction(const FactorPair& f, Index i, double score) {
  int above = 0;
  for (Eigen::Index k = 0; k < f.thresholds.cols(); ++k) {
    above += score > f.thresholds(i, k);
  }
  return f.rating_min + above;
}

// sum over rows of (observed count) * |row|^2
double weighted_norms(const Adjacency& adj, const FactorMatrix& f) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < f.rows(); ++t) {
    total += static_cast<double>(adj.count(static_cast<Index>(t))) * f.row(t).squaredNorm();
  }
  return total;
}

double loss_weight(const FactorizerSpec& spec) {
  switch (spec.algorithm) {
    case Algorithm::kPmfSgd: return 0.5;
    case Algorithm::kMmmfFast: return spec.margin_c;
    default: return 1.0;
  }
}

double regularizer(double row_norms, double col_norms, const FactorizerSpec& spec) {
  switch (spec.algorithm) {
    case Algorithm::kSvdAls:
    case Algorithm::kNmf: return spec.lambda * (row_norms + col_norms);
    case Algorithm::kPmfSgd: return 0.5 * (spec.lambda_u * row_norms + spec.lambda_v * col_norms);
    case Algorithm::kMmmfFast: return 0.5 * (row_norms + col_norms);
  }
  return 0.0;
}

double compute_objective(const Observed& o, const FactorPair& f,
                         const FactorizerSpec& spec, const Scale& scale) {
  const Adjacency& rows = o.by_row;
  double loss = 0.0;
  for (Index i = 0; i < f.n_rows(); ++i) {
    for (std::size_t p = rows.ptr[i]; p < rows.ptr[i + 1]; ++p) {
      const double s = f.U.row(i).dot(f.V.row(rows.idx[p]));
      if (spec.algorithm == Algorithm::kMmmfFast) {
        const int y = level_of(rows.val[p], scale);
        for (Eigen::Index k = 0; k < f.thresholds.cols(); ++k) {
          const double t = k >= y ? 1.0 : -1.0;
          loss += smooth_hinge(t * (f.thresholds(i, k) - s));
        }
      } else {
        const double e = rows.val[p] - s;
        loss += e * e;
      }
    }
  }
  return loss_weight(spec) * loss + regularizer(weighted_norms(o.by_row, f.U),
                                                weighted_norms(o.by_col, f.V), spec);
}

// Ridge solve of every row of `target` against fixed `other`.
void als_half_step(const Adjacency& adj, const FactorMatrix& other,
                   double lambda, FactorMatrix& target) {
  const Eigen::Index r = target.cols();
  Eigen::MatrixXd gathered;
  Eigen::VectorXd x;
  for (Eigen::Index t = 0; t < target.rows(); ++t) {
    const std::size_t n = adj.count(static_cast<Index>(t));
    if (n == 0) {
      target.row(t).setZero();
      continue;
    }
    gathered.resize(static_cast<Eigen::Index>(n), r);
    x.resize(static_cast<Eigen::Index>(n));
    for (std::size_t q = 0; q < n; ++q) {
      const std::size_t p = adj.ptr[t] + q;
      gathered.row(static_cast<Eigen::Index>(q)) = other.row(adj.idx[p]);
      x(static_cast<Eigen::Index>(q)) = adj.val[p];
    }
    Eigen::MatrixXd gram = gathered.transpose() * gathered;
    gram.diagonal().array() += lambda * static_cast<double>(n);
    const Eigen::VectorXd rhs = gathered.transpose() * x;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() == Eigen::Success) {
      target.row(t) = llt.solve(rhs).transpose();
    } else {
      target.row(t) = gram.ldlt().solve(rhs).transpose();
    }
  }
}

// Multiplicative update of every row of `target` against fixed `other`.
void nmf_half_step(const Adjacency& adj, const FactorMatrix& other,
                   double lambda, FactorMatrix& target) {
  const Eigen::Index r = target.cols();
  Eigen::VectorXd num(r), den(r);
  for (Eigen::Index t = 0; t < target.rows(); ++t) {
    const std::size_t n = adj.count(static_cast<Index>(t));
    if (n == 0) continue;
    num.setZero();
    den.setZero();
    for (std::size_t p = adj.ptr[t]; p < adj.ptr[t + 1]; ++p) {
      const auto v = other.row(adj.idx[p]);
      const double pred = target.row(t).dot(v);
      num += adj.val[p] * v.transpose();
      den += pred * v.transpose();
    }
    den += lambda * static_cast<double>(n) * target.row(t).transpose();
    for (Eigen::Index k = 0; k < r; ++k) {
      if (den(k) > 0) {
        target(t, k) *= num(k) / den(k);
      } else if (num(k) == 0) {
        target(t, k) = 0.0;
      }
    }
  }
}

// Entry visiting order for one SGD epoch: sorted by a key hashed from the
// row and column labels, so any subset of entries keeps its relative order.
std::vector<std::size_t> epoch_order(const std::vector<Entry>& entries,
                                     const std::vector<std::uint64_t>& row_keys,
                                     const std::vector<std::uint64_t>& col_keys,
                                     std::uint64_t seed, int epoch) {
  const std::uint64_t salt = mix64(seed ^ mix64(static_cast<std::uint64_t>(epoch) + 1));
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(entries.size());
  for (std::size_t p = 0; p < entries.size(); ++p) {
    keyed[p] = {mix64(row_keys[entries[p].row] ^ mix64(col_keys[entries[p].col] ^ salt)), p};
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> order(entries.size());
  for (std::size_t p = 0; p < entries.size(); ++p) order[p] = keyed[p].second;
  return order;
}

// Per-sample steps on the count-weighted objective: a row with n entries is
// visited n times per epoch, so each visit applies the unscaled penalty.
void pmf_epoch(const std::vector<Entry>& entries,
               const std::vector<std::size_t>& order,
               const FactorizerSpec& spec, FactorPair& f) {
  const double lr = spec.learning_rate;
  Eigen::RowVectorXd u_old;
  for (std::size_t p : order) {
    const Entry& e = entries[p];
    auto u = f.U.row(e.row);
    auto v = f.V.row(e.col);
    const double err = e.value - u.dot(v);
    u_old = u;
    u += lr * (err * v - spec.lambda_u * u);
    v += lr * (err * u_old - spec.lambda_v * v);
  }
}

void mmmf_epoch(const std::vector<Entry>& entries,
                const std::vector<std::size_t>& order,
                const FactorizerSpec& spec, const Scale& scale, FactorPair& f) {
  const double lr = spec.learning_rate;
  const double c = spec.margin_c;
  Eigen::RowVectorXd u_old;
  for (std::size_t p : order) {
    const Entry& e = entries[p];
    auto u = f.U.row(e.row);
    auto v = f.V.row(e.col);
    const double s = u.dot(v);
    const int y = level_of(e.value, scale);
    double d_score = 0.0;
    for (Eigen::Index k = 0; k < f.thresholds.cols(); ++k) {
      const double t = k >= y ? 1.0 : -1.0;
      const double g = smooth_hinge_grad(t * (f.thresholds(e.row, k) - s));
      d_score -= g * t;
      f.thresholds(e.row, k) -= lr * c * g * t;
    }
    u_old = u;
    u -= lr * (c * d_score * v + u);
    v -= lr * (c * d_score * u_old + v);
  }
}

}  // namespace

FactorPair factorize(const RatingMatrix& m, const FactorizerSpec& spec,
                     const IterationObserver& observer) {
  spec.validate();
  if (m.nnz() == 0) throw DegenerateError("cannot factorize a matrix without entries");
  if (spec.algorithm == Algorithm::kNmf && m.min_value() < 0) {
    throw DomainError("NMF requires non-negative ratings");
  }
  const Observed o = index_entries(m);
  const Scale scale = rating_scale(m, spec);

  FactorPair f;
  f.algorithm = spec.algorithm;
  f.U.resize(m.n_rows(), spec.rank);
  f.V.resize(m.n_cols(), spec.rank);
  init_factor_rows(f.U, m.row_labels(), o.by_row, spec, kRowSalt);
  init_factor_rows(f.V, m.col_labels(), o.by_col, spec, kColSalt);
  if (spec.algorithm == Algorithm::kMmmfFast) {
    f.rating_min = scale.min;
    f.thresholds.resize(m.n_rows(), scale.levels - 1);
    for (Eigen::Index k = 0; k < f.thresholds.cols(); ++k) {
      f.thresholds.col(k).setConstant(static_cast<double>(k) -
                                      0.5 * static_cast<double>(scale.levels - 2));
    }
  }

  std::vector<Entry> entries(m.entries().begin(), m.entries().end());
  std::vector<std::uint64_t> row_keys, col_keys;
  const bool sgd = spec.algorithm == Algorithm::kPmfSgd ||
                   spec.algorithm == Algorithm::kMmmfFast;
  if (sgd) {
    for (const auto& l : m.row_labels()) row_keys.push_back(hash_string(l) ^ kRowSalt);
    for (const auto& l : m.col_labels()) col_keys.push_back(hash_string(l) ^ kColSalt);
  }

  double previous = compute_objective(o, f, spec, scale);
  f.objective_history.push_back(previous);
  for (int iter = 1; iter <= spec.max_iters; ++iter) {
    switch (spec.algorithm) {
      case Algorithm::kSvdAls:
        als_half_step(o.by_row, f.V, spec.lambda, f.U);
        als_half_step(o.by_col, f.U, spec.lambda, f.V);
        break;
      case Algorithm::kNmf:
        nmf_half_step(o.by_row, f.V, spec.lambda, f.U);
        nmf_half_step(o.by_col, f.U, spec.lambda, f.V);
        break;
      case Algorithm::kPmfSgd:
        pmf_epoch(entries, epoch_order(entries, row_keys, col_keys, spec.seed, iter),
                  spec, f);
        break;
      case Algorithm::kMmmfFast:
        mmmf_epoch(entries, epoch_order(entries, row_keys, col_keys, spec.seed, iter),
                   spec, scale, f);
        break;
    }
    const double current = compute_objective(o, f, spec, scale);
    if (!std::isfinite(current)) {
      throw DivergenceError(to_string(spec.algorithm) + " objective is not finite at iteration " +
                                std::to_string(iter),
                            iter);
    }
    f.objective_history.push_back(current);
    f.iterations = iter;
    f.final_objective = current;
    if (observer) observer(iter, f);
    const double change = std::abs(previous - current) /
                          std::max(std::abs(previous), 1e-300);
    previous = current;
    if (change < spec.convergence_tol) {
      f.converged = true;
      break;
    }
  }
  if (f.iterations == 0) f.final_objective = previous;
  return f;
}

double predict_unchecked(const FactorPair& f, Index i, Index j) {
  const double s = f.U.row(i).dot(f.V.row(j));
  if (f.algorithm == Algorithm::kMmmfFast && f.thresholds.cols() > 0) {
    return mmmf_level_prediction(f, i, s);
  }
  return s;
}

double predict_entry(const FactorPair& f, Index i, Index j) {
  if (i < 0 || i >= f.n_rows() || j < 0 || j >= f.n_cols()) {
    throw ShapeError("prediction index (" + std::to_string(i) + ", " +
                     std::to_string(j) + ") out of range");
  }
  return predict_unchecked(f, i, j);
}

bool satisfies_constraints(const FactorPair& f) {
  if (f.algorithm != Algorithm::kNmf) return true;
  return (f.U.size() == 0 || f.U.minCoeff() >= 0) &&
         (f.V.size() == 0 || f.V.minCoeff() >= 0);
}

double objective_value(const RatingMatrix& m, const FactorPair& f,
                       const FactorizerSpec& spec) {
  if (m.n_rows() != f.n_rows() || m.n_cols() != f.n_cols()) {
    throw ShapeError("factor dimensions do not match the matrix");
  }
  Scale scale = rating_scale(m, spec);
  if (spec.algorithm == Algorithm::kMmmfFast) {
    scale.min = f.rating_min;
    scale.levels = static_cast<int>(f.thresholds.cols()) + 1;
  }
  return compute_objective(index_entries(m), f, spec, scale);
}

double regularizer_value(const RatingMatrix& m, const FactorPair& f,
                         const FactorizerSpec& spec) {
  if (m.n_rows() != f.n_rows() || m.n_cols() != f.n_cols()) {
    throw ShapeError("factor dimensions do not match the matrix");
  }
  const Observed o = index_entries(m);
  return regularizer(weighted_norms(o.by_row, f.U), weighted_norms(o.by_col, f.V), spec);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'L', 'M', 'F', 'F', 'A', 'C', 'T', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&value, bytes, sizeof(T));
    return value;
  }
}

template <typename T>
void put(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("factor file is truncated", 0);
  return to_little(value);
}

void put_matrix(std::ostream& out, const FactorMatrix& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) put<double>(out, a(i, k));
  }
}

void get_matrix(std::istream& in, FactorMatrix& a, std::uint64_t rows,
                std::uint64_t cols) {
  a.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index k = 0; k < a.cols(); ++k) a(i, k) = get<double>(in);
  }
}

nlohmann::json spec_to_json(const FactorizerSpec& s) {
  return {{"algorithm", to_string(s.algorithm)}, {"rank", s.rank},
          {"lambda", s.lambda}, {"lambda_u", s.lambda_u},
          {"lambda_v", s.lambda_v}, {"margin_c", s.margin_c},
          {"learning_rate", s.learning_rate}, {"max_iters", s.max_iters},
          {"convergence_tol", s.convergence_tol}, {"seed", s.seed},
          {"scale_min", s.scale_min}, {"scale_max", s.scale_max}};
}

FactorizerSpec spec_from_json(const nlohmann::json& j) {
  FactorizerSpec s;
  s.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  s.rank = j.at("rank").get<int>();
  s.lambda = j.at("lambda").get<double>();
  s.lambda_u = j.at("lambda_u").get<double>();
  s.lambda_v = j.at("lambda_v").get<double>();
  s.margin_c = j.at("margin_c").get<double>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.max_iters = j.at("max_iters").get<int>();
  s.convergence_tol = j.at("convergence_tol").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.scale_min = j.value("scale_min", 0.0);
  s.scale_max = j.value("scale_max", 0.0);
  return s;
}

}  // namespace

std::string spec_to_json_text(const FactorizerSpec& spec) {
  return spec_to_json(spec).dump();
}

FactorizerSpec spec_from_json_text(const std::string& text) {
  try {
    return spec_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad factorizer spec: ") + e.what(), 0);
  }
}

void write_factors(std::ostream& out, const FactorPair& f) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.algorithm));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.rank()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.thresholds.cols()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(f.n_rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(f.n_cols()));
  put<double>(out, f.rating_min);
  put_matrix(out, f.U);
  put_matrix(out, f.V);
  if (f.thresholds.cols() > 0) put_matrix(out, f.thresholds);
  if (!out) throw std::runtime_error("failed to write factor data");
}

FactorPair read_factors(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a factor file (bad magic)", 0);
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw ParseError("unsupported factor file version " + std::to_string(version), 0);
  }
  const auto tag = get<std::uint32_t>(in);
  if (tag > static_cast<std::uint32_t>(Algorithm::kMmmfFast)) {
    throw ParseError("unknown algorithm tag " + std::to_string(tag), 0);
  }
  FactorPair f;
  f.algorithm = static_cast<Algorithm>(tag);
  const auto r = get<std::uint32_t>(in);
  const auto n_thresholds = get<std::uint32_t>(in);
  const auto n_rows = get<std::uint64_t>(in);
  const auto n_cols = get<std::uint64_t>(in);
  f.rating_min = get<double>(in);
  get_matrix(in, f.U, n_rows, r);
  get_matrix(in, f.V, n_cols, r);
  if (n_thresholds > 0) get_matrix(in, f.thresholds, n_rows, n_thresholds);
  return f;
}

void save_factors(const std::string& path, const FactorPair& f,
                  const FactorizerSpec& spec) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_factors(out, f);
  }
  nlohmann::json side = {{"format", "lmf-factors"},
                         {"version", kVersion},
                         {"spec", spec_to_json(spec)},
                         {"objective_history", f.objective_history},
                         {"final_objective", f.final_objective},
                         {"iterations", f.iterations},
                         {"converged", f.converged}};
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot open '" + path + ".json' for writing");
  out << side.dump(2) << '\n';
}

FactorPair load_factors(const std::string& path, FactorizerSpec* spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open factor file '" + path + "'", 0);
  FactorPair f = read_factors(in);
  std::ifstream side_in(path + ".json");
  if (side_in) {
    try {
      nlohmann::json side = nlohmann::json::parse(side_in);
      f.objective_history = side.at("objective_history").get<std::vector<double>>();
      f.final_objective = side.at("final_objective").get<double>();
      f.iterations = side.at("iterations").get<int>();
      f.converged = side.at("converged").get<bool>();
      if (spec) *spec = spec_from_json(side.at("spec"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad factor sidecar '" + path + ".json': " + e.what(), 0);
    }
  } else if (spec) {
    throw ParseError("factor sidecar '" + path + ".json' is missing", 0);
  }
  return f;
}

}  // namespace lmf
