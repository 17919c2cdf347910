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

#include "lmf/sparse.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>

#include "lmf/errors.hpp"

namespace lmf {

namespace {

std::vector<std::string> default_labels(Index n) {
  std::vector<std::string> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[i] = std::to_string(i);
  return labels;
}

}  // namespace

RatingMatrix::RatingMatrix(Index n_rows, Index n_cols,
                           std::vector<Entry> entries,
                           std::vector<std::string> row_labels,
                           std::vector<std::string> col_labels)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      entries_(std::move(entries)),
      row_labels_(std::move(row_labels)),
      col_labels_(std::move(col_labels)) {
  if (n_rows < 0 || n_cols < 0) throw ShapeError("negative matrix dimension");
  if (row_labels_.empty()) row_labels_ = default_labels(n_rows);
  if (col_labels_.empty()) col_labels_ = default_labels(n_cols);
  if (row_labels_.size() != static_cast<std::size_t>(n_rows) ||
      col_labels_.size() != static_cast<std::size_t>(n_cols)) {
    throw ShapeError("label count does not match matrix dimension");
  }
  for (const Entry& e : entries_) {
    if (e.row < 0 || e.row >= n_rows || e.col < 0 || e.col >= n_cols) {
      throw ShapeError("entry (" + std::to_string(e.row) + ", " +
                       std::to_string(e.col) + ") outside " +
                       std::to_string(n_rows) + "x" + std::to_string(n_cols));
    }
  }
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t k = 1; k < entries_.size(); ++k) {
    if (entries_[k].row == entries_[k - 1].row &&
        entries_[k].col == entries_[k - 1].col) {
      throw DuplicateEntryError(
          "duplicate entry (" + row_labels_[entries_[k].row] + ", " +
          col_labels_[entries_[k].col] + ")");
    }
  }

  row_ptr_.assign(static_cast<std::size_t>(n_rows) + 1, 0);
  col_ptr_.assign(static_cast<std::size_t>(n_cols) + 1, 0);
  for (const Entry& e : entries_) {
    ++row_ptr_[e.row + 1];
    ++col_ptr_[e.col + 1];
  }
  std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
  std::partial_sum(col_ptr_.begin(), col_ptr_.end(), col_ptr_.begin());

  col_entry_.resize(entries_.size());
  std::vector<std::size_t> fill(col_ptr_.begin(), col_ptr_.end() - 1);
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    col_entry_[fill[entries_[k].col]++] = static_cast<std::uint32_t>(k);
  }

  if (!entries_.empty()) {
    auto [lo, hi] = std::minmax_element(
        entries_.begin(), entries_.end(),
        [](const Entry& a, const Entry& b) { return a.value < b.value; });
    min_value_ = lo->value;
    max_value_ = hi->value;
  }
}

std::optional<double> RatingMatrix::find(Index i, Index j) const {
  if (i < 0 || i >= n_rows_ || j < 0 || j >= n_cols_) return std::nullopt;
  auto r = row(i);
  auto it = std::lower_bound(r.begin(), r.end(), j,
                             [](const Entry& e, Index c) { return e.col < c; });
  if (it == r.end() || it->col != j) return std::nullopt;
  return it->value;
}

RatingMatrix RatingMatrix::submatrix(std::span<const Index> rows,
                                     std::span<const Index> cols) const {
  std::vector<Index> col_local(static_cast<std::size_t>(n_cols_), -1);
  std::vector<std::string> col_labels;
  col_labels.reserve(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= n_cols_ || col_local[cols[k]] != -1) {
      throw ShapeError("submatrix column set is out of range or repeats");
    }
    col_local[cols[k]] = static_cast<Index>(k);
    col_labels.push_back(col_labels_[cols[k]]);
  }
  std::vector<Entry> entries;
  std::vector<std::string> row_labels;
  row_labels.reserve(rows.size());
  std::vector<char> seen(static_cast<std::size_t>(n_rows_), 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    Index i = rows[k];
    if (i < 0 || i >= n_rows_ || seen[i]) {
      throw ShapeError("submatrix row set is out of range or repeats");
    }
    seen[i] = 1;
    row_labels.push_back(row_labels_[i]);
    for (const Entry& e : row(i)) {
      Index c = col_local[e.col];
      if (c >= 0) entries.push_back({static_cast<Index>(k), c, e.value});
    }
  }
  return RatingMatrix(static_cast<Index>(rows.size()),
                      static_cast<Index>(cols.size()), std::move(entries),
                      std::move(row_labels), std::move(col_labels));
}

RatingMatrix RatingMatrix::select_entries(
    std::span<const std::size_t> positions) const {
  std::vector<Entry> kept;
  kept.reserve(positions.size());
  for (std::size_t p : positions) {
    if (p >= entries_.size()) throw ShapeError("entry position out of range");
    kept.push_back(entries_[p]);
  }
  return RatingMatrix(n_rows_, n_cols_, std::move(kept), row_labels_,
                      col_labels_);
}

LabelIndex make_label_index(const std::vector<std::string>& labels) {
  LabelIndex index;
  index.reserve(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    index.emplace(labels[k], static_cast<Index>(k));
  }
  return index;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line,
                                           RatingLogFormat format) {
  std::vector<std::string_view> fields;
  if (format == RatingLogFormat::kCsv) {
    std::size_t start = 0;
    while (true) {
      std::size_t comma = line.find(',', start);
      std::string_view f = line.substr(start, comma - start);
      while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
      while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
      fields.push_back(f);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return fields;
  }
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) ++k;
    std::size_t start = k;
    while (k < line.size() && line[k] != ' ' && line[k] != '\t') ++k;
    if (k > start) fields.push_back(line.substr(start, k - start));
  }
  return fields;
}

}  // namespace

RatingMatrix parse_ratings(std::istream& in, RatingLogFormat format) {
  LabelIndex users;
  LabelIndex items;
  std::vector<std::string> user_labels;
  std::vector<std::string> item_labels;
  std::vector<Entry> entries;
  std::vector<long> entry_line;

  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view view(line);
    std::size_t first = view.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    if (view[first] == '#') continue;

    auto fields = split_fields(view, format);
    if (fields.size() < 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": expected `user item rating [timestamp]`",
                       line_no);
    }
    double value = 0.0;
    auto rating = fields[2];
    auto [ptr, ec] =
        std::from_chars(rating.data(), rating.data() + rating.size(), value);
    if (ec != std::errc() || ptr != rating.data() + rating.size()) {
      throw ParseError("line " + std::to_string(line_no) +
                           ": rating is not numeric: `" + std::string(rating) +
                           "`",
                       line_no);
    }

    std::string user(fields[0]);
    std::string item(fields[1]);
    auto [uit, unew] = users.try_emplace(user, static_cast<Index>(users.size()));
    if (unew) user_labels.push_back(user);
    auto [iit, inew] = items.try_emplace(item, static_cast<Index>(items.size()));
    if (inew) item_labels.push_back(item);
    entries.push_back({uit->second, iit->second, value});
    entry_line.push_back(line_no);
  }
  if (entries.empty()) throw DegenerateError("empty input: no rating records");

  // Report duplicates against the offending line before the constructor sorts.
  {
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return entries[a].row != entries[b].row ? entries[a].row < entries[b].row
                                              : entries[a].col < entries[b].col;
    });
    for (std::size_t k = 1; k < order.size(); ++k) {
      const Entry& a = entries[order[k - 1]];
      const Entry& b = entries[order[k]];
      if (a.row == b.row && a.col == b.col) {
        throw DuplicateEntryError(
            "line " + std::to_string(entry_line[order[k]]) +
            ": duplicate entry (" + user_labels[b.row] + ", " +
            item_labels[b.col] + "), first seen on line " +
            std::to_string(entry_line[order[k - 1]]));
      }
    }
  }

  auto n_rows = static_cast<Index>(user_labels.size());
  auto n_cols = static_cast<Index>(item_labels.size());
  return RatingMatrix(n_rows, n_cols, std::move(entries),
                      std::move(user_labels), std::move(item_labels));
}

RatingMatrix load_ratings(const std::string& path, RatingLogFormat format) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, "cannot open rating file: " + path);
  return parse_ratings(in, format);
}

void write_ratings(std::ostream& out, const RatingMatrix& m) {
  for (const Entry& e : m.entries()) {
    out << m.row_labels()[e.row] << '\t' << m.col_labels()[e.col] << '\t'
        << e.value << '\n';
  }
}

// ---------------------------------------------------------------------------

IndexPermutation IndexPermutation::identity(Index n_rows, Index n_cols) {
  IndexPermutation p;
  p.row_perm.resize(static_cast<std::size_t>(n_rows));
  p.col_perm.resize(static_cast<std::size_t>(n_cols));
  std::iota(p.row_perm.begin(), p.row_perm.end(), 0);
  std::iota(p.col_perm.begin(), p.col_perm.end(), 0);
  return p;
}

IndexPermutation IndexPermutation::from_order(std::span<const Index> row_order,
                                              std::span<const Index> col_order) {
  IndexPermutation p;
  p.row_perm.assign(row_order.size(), -1);
  p.col_perm.assign(col_order.size(), -1);
  for (std::size_t k = 0; k < row_order.size(); ++k) {
    Index i = row_order[k];
    if (i < 0 || static_cast<std::size_t>(i) >= row_order.size() ||
        p.row_perm[i] != -1) {
      throw ShapeError("row order is not a permutation");
    }
    p.row_perm[i] = static_cast<Index>(k);
  }
  for (std::size_t k = 0; k < col_order.size(); ++k) {
    Index j = col_order[k];
    if (j < 0 || static_cast<std::size_t>(j) >= col_order.size() ||
        p.col_perm[j] != -1) {
      throw ShapeError("column order is not a permutation");
    }
    p.col_perm[j] = static_cast<Index>(k);
  }
  return p;
}

namespace {

bool is_bijection(const std::vector<Index>& perm) {
  std::vector<char> hit(perm.size(), 0);
  for (Index v : perm) {
    if (v < 0 || static_cast<std::size_t>(v) >= perm.size() || hit[v]) {
      return false;
    }
    hit[v] = 1;
  }
  return true;
}

std::vector<Index> invert(const std::vector<Index>& perm) {
  std::vector<Index> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    inv[perm[k]] = static_cast<Index>(k);
  }
  return inv;
}

}  // namespace

bool IndexPermutation::is_valid() const {
  return is_bijection(row_perm) && is_bijection(col_perm);
}

IndexPermutation IndexPermutation::inverse() const {
  if (!is_valid()) throw ShapeError("permutation is not a bijection");
  return {invert(row_perm), invert(col_perm)};
}

RatingMatrix apply_permutation(const RatingMatrix& m,
                               const IndexPermutation& p) {
  if (p.row_perm.size() != static_cast<std::size_t>(m.n_rows()) ||
      p.col_perm.size() != static_cast<std::size_t>(m.n_cols())) {
    throw ShapeError("permutation dimensions do not match the matrix");
  }
  if (!p.is_valid()) throw ShapeError("permutation is not a bijection");
  std::vector<Entry> entries;
  entries.reserve(m.nnz());
  for (const Entry& e : m.entries()) {
    entries.push_back({p.row_perm[e.row], p.col_perm[e.col], e.value});
  }
  std::vector<std::string> row_labels(m.row_labels().size());
  std::vector<std::string> col_labels(m.col_labels().size());
  for (std::size_t k = 0; k < row_labels.size(); ++k) {
    row_labels[p.row_perm[k]] = m.row_labels()[k];
  }
  for (std::size_t k = 0; k < col_labels.size(); ++k) {
    col_labels[p.col_perm[k]] = m.col_labels()[k];
  }
  return RatingMatrix(m.n_rows(), m.n_cols(), std::move(entries),
                      std::move(row_labels), std::move(col_labels));
}

// ---------------------------------------------------------------------------

SubmatrixView::SubmatrixView(const RatingMatrix& m, std::vector<Index> rows,
                             std::vector<Index> cols)
    : matrix_(&m),
      rows_(std::move(rows)),
      cols_(std::move(cols)),
      row_mask_(static_cast<std::size_t>(m.n_rows()), 0),
      col_mask_(static_cast<std::size_t>(m.n_cols()), 0) {
  for (Index i : rows_) {
    if (i < 0 || i >= m.n_rows() || row_mask_[i]) {
      throw ShapeError("view row set is out of range or repeats");
    }
    row_mask_[i] = 1;
  }
  for (Index j : cols_) {
    if (j < 0 || j >= m.n_cols() || col_mask_[j]) {
      throw ShapeError("view column set is out of range or repeats");
    }
    col_mask_[j] = 1;
  }
}

SubmatrixView SubmatrixView::full(const RatingMatrix& m) {
  std::vector<Index> rows(static_cast<std::size_t>(m.n_rows()));
  std::vector<Index> cols(static_cast<std::size_t>(m.n_cols()));
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  return SubmatrixView(m, std::move(rows), std::move(cols));
}

std::size_t SubmatrixView::count_entries() const {
  std::size_t n = 0;
  for (Index i : rows_) {
    for (const Entry& e : matrix_->row(i)) n += col_mask_[e.col];
  }
  return n;
}

double density(const SubmatrixView& view) {
  if (view.empty()) throw DegenerateError("density of an empty view");
  return static_cast<double>(view.count_entries()) /
         static_cast<double>(view.area());
}

double avg_density(std::span<const SubmatrixView> views) {
  if (views.empty()) throw DegenerateError("average density of no views");
  std::uint64_t count = 0;
  std::uint64_t area = 0;
  for (const SubmatrixView& v : views) {
    if (v.empty()) throw DegenerateError("average density over an empty view");
    count += v.count_entries();
    area += v.area();
  }
  return static_cast<double>(count) / static_cast<double>(area);
}

double restricted_density(VectorRef vector, const SubmatrixView& block) {
  const RatingMatrix& m = block.matrix();
  std::size_t hits = 0;
  if (vector.axis == Axis::kRow) {
    if (vector.index < 0 || vector.index >= m.n_rows() ||
        !block.has_row(vector.index)) {
      throw ShapeError("row " + std::to_string(vector.index) +
                       " is outside the block");
    }
    if (block.cols().empty()) throw DegenerateError("block has no columns");
    for (const Entry& e : m.row(vector.index)) hits += block.has_col(e.col);
    return static_cast<double>(hits) / static_cast<double>(block.cols().size());
  }
  if (vector.index < 0 || vector.index >= m.n_cols() ||
      !block.has_col(vector.index)) {
    throw ShapeError("column " + std::to_string(vector.index) +
                     " is outside the block");
  }
  if (block.rows().empty()) throw DegenerateError("block has no rows");
  for (std::uint32_t pos : m.col_entries(vector.index)) {
    hits += block.has_row(m.entries()[pos].row);
  }
  return static_cast<double>(hits) / static_cast<double>(block.rows().size());
}

}  // namespace lmf
