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

// Sparse rating matrices, index permutations, submatrix views and the
// density calculus used to drive block reordering.

#ifndef LMF_SPARSE_HPP_
#define LMF_SPARSE_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lmf {

using Index = std::int32_t;

struct Entry {
  Index row;
  Index col;
  double value;

  friend bool operator==(const Entry&, const Entry&) = default;
};

// Immutable store of observed ratings. Entries are kept sorted by (row, col)
// so that each row is a contiguous span; a second index lists, for every
// column, the positions of its entries in row order.
class RatingMatrix {
 public:
  RatingMatrix() = default;

  // Throws ShapeError for out-of-range indices and DuplicateEntryError for
  // repeated (row, col) pairs. Missing labels default to the decimal index.
  RatingMatrix(Index n_rows, Index n_cols, std::vector<Entry> entries,
               std::vector<std::string> row_labels = {},
               std::vector<std::string> col_labels = {});

  Index n_rows() const { return n_rows_; }
  Index n_cols() const { return n_cols_; }
  std::size_t nnz() const { return entries_.size(); }

  std::span<const Entry> entries() const { return entries_; }
  std::span<const Entry> row(Index i) const {
    return {entries_.data() + row_ptr_[i], entries_.data() + row_ptr_[i + 1]};
  }
  // Positions into entries() for column j, ascending by row.
  std::span<const std::uint32_t> col_entries(Index j) const {
    return {col_entry_.data() + col_ptr_[j],
            col_entry_.data() + col_ptr_[j + 1]};
  }
  std::size_t row_degree(Index i) const {
    return row_ptr_[i + 1] - row_ptr_[i];
  }
  std::size_t col_degree(Index j) const {
    return col_ptr_[j + 1] - col_ptr_[j];
  }

  std::optional<double> find(Index i, Index j) const;

  const std::vector<std::string>& row_labels() const { return row_labels_; }
  const std::vector<std::string>& col_labels() const { return col_labels_; }

  // Smallest and largest observed value; both 0 for an empty matrix.
  double min_value() const { return min_value_; }
  double max_value() const { return max_value_; }

  // Induced submatrix with local indices 0..rows.size()-1 in the given order.
  // Labels carry over from this matrix.
  RatingMatrix submatrix(std::span<const Index> rows,
                         std::span<const Index> cols) const;

  // Same shape and labels, keeping only the listed entry positions.
  RatingMatrix select_entries(std::span<const std::size_t> positions) const;

  friend bool operator==(const RatingMatrix& a, const RatingMatrix& b) {
    return a.n_rows_ == b.n_rows_ && a.n_cols_ == b.n_cols_ &&
           a.entries_ == b.entries_;
  }

 private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<Entry> entries_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_ptr_{0};
  std::vector<std::uint32_t> col_entry_;
  std::vector<std::string> row_labels_;
  std::vector<std::string> col_labels_;
  double min_value_ = 0.0;
  double max_value_ = 0.0;
};

using LabelIndex = std::unordered_map<std::string, Index>;
LabelIndex make_label_index(const std::vector<std::string>& labels);

// ---------------------------------------------------------------------------
// Loading

enum class RatingLogFormat {
  kWhitespace,  // tab or runs of spaces; MovieLens u.data
  kCsv,         // comma separated
};

// Reads `user item rating [timestamp]` records. Blank lines and lines that
// start with '#' are skipped. Ids are densely re-indexed in order of first
// appearance.
RatingMatrix load_ratings(const std::string& path,
                          RatingLogFormat format = RatingLogFormat::kWhitespace);
RatingMatrix parse_ratings(std::istream& in,
                           RatingLogFormat format = RatingLogFormat::kWhitespace);

// Writes `row_label<TAB>col_label<TAB>value` lines.
void write_ratings(std::ostream& out, const RatingMatrix& m);

// ---------------------------------------------------------------------------
// Permutations

struct IndexPermutation {
  std::vector<Index> row_perm;  // old row -> new row
  std::vector<Index> col_perm;  // old col -> new col

  static IndexPermutation identity(Index n_rows, Index n_cols);
  // Builds the permutation that places `row_order[k]` at position k.
  static IndexPermutation from_order(std::span<const Index> row_order,
                                     std::span<const Index> col_order);

  bool is_valid() const;
  IndexPermutation inverse() const;
};

RatingMatrix apply_permutation(const RatingMatrix& m,
                               const IndexPermutation& p);

// ---------------------------------------------------------------------------
// Views and density

class SubmatrixView {
 public:
  // Throws ShapeError if an index is out of range or repeated.
  SubmatrixView(const RatingMatrix& m, std::vector<Index> rows,
                std::vector<Index> cols);
  static SubmatrixView full(const RatingMatrix& m);

  const RatingMatrix& matrix() const { return *matrix_; }
  const std::vector<Index>& rows() const { return rows_; }
  const std::vector<Index>& cols() const { return cols_; }
  bool has_row(Index i) const { return row_mask_[i] != 0; }
  bool has_col(Index j) const { return col_mask_[j] != 0; }
  bool empty() const { return rows_.empty() || cols_.empty(); }

  std::size_t count_entries() const;
  std::uint64_t area() const {
    return static_cast<std::uint64_t>(rows_.size()) * cols_.size();
  }

 private:
  const RatingMatrix* matrix_;
  std::vector<Index> rows_;
  std::vector<Index> cols_;
  std::vector<char> row_mask_;
  std::vector<char> col_mask_;
};

enum class Axis { kRow, kCol };

struct VectorRef {
  Axis axis;
  Index index;
};

// n(X) / area(X). Throws DegenerateError for an empty view.
double density(const SubmatrixView& view);

// Pooled ratio sum(n) / sum(area), not the mean of per-view densities.
double avg_density(std::span<const SubmatrixView> views);

// Entries of one row (column) falling inside the block, divided by the
// block's column (row) count. Throws ShapeError if the vector is not part of
// the block.
double restricted_density(VectorRef vector, const SubmatrixView& block);

}  // namespace lmf

#endif  // LMF_SPARSE_HPP_
