#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <vector>

#include "mpbetti/errors.hpp"

namespace mpbetti {

/// Matrix over Z/2 stored column-wise, either as sorted row-index lists
/// (sparse) or packed 64-bit words (dense). Auto picks dense above 5% fill.
class GF2Matrix {
public:
  enum class Storage { automatic, sparse, dense };
  static constexpr double kDenseThreshold = 0.05;
  static constexpr std::int64_t kNoPivot = -1;

  GF2Matrix() = default;

  GF2Matrix(std::size_t nrows, std::vector<std::vector<std::uint32_t>> columns, Storage storage = Storage::automatic)
      : nrows_(nrows), ncols_(columns.size()) {
    std::size_t nnz = 0;
    for (auto& c : columns) {
      std::sort(c.begin(), c.end());
      // mod-2 incidence: repeated entries cancel in pairs
      std::vector<std::uint32_t> reduced;
      for (std::size_t i = 0; i < c.size();) {
        std::size_t j = i;
        while (j < c.size() && c[j] == c[i]) ++j;
        if ((j - i) % 2 == 1) reduced.push_back(c[i]);
        i = j;
      }
      if (!reduced.empty() && reduced.back() >= nrows) throw InvalidArgument("GF2Matrix row index out of range");
      c = std::move(reduced);
      nnz += c.size();
    }
    bool dense = storage == Storage::dense;
    if (storage == Storage::automatic && nrows_ > 0 && ncols_ > 0)
      dense = static_cast<double>(nnz) > kDenseThreshold * static_cast<double>(nrows_) * static_cast<double>(ncols_);
    if (dense) {
      dense_ = true;
      words_ = (nrows_ + 63) / 64;
      bits_.assign(ncols_ * words_, 0);
      for (std::size_t j = 0; j < ncols_; ++j)
        for (auto r : columns[j]) bits_[j * words_ + r / 64] |= std::uint64_t{1} << (r % 64);
    } else {
      sparse_ = std::move(columns);
    }
  }

  static GF2Matrix zero(std::size_t nrows, std::size_t ncols, Storage storage = Storage::automatic) {
    return GF2Matrix(nrows, std::vector<std::vector<std::uint32_t>>(ncols), storage);
  }

  std::size_t nrows() const noexcept { return nrows_; }
  std::size_t ncols() const noexcept { return ncols_; }
  bool is_dense() const noexcept { return dense_; }

  bool get(std::size_t row, std::size_t col) const {
    if (dense_) return (bits_[col * words_ + row / 64] >> (row % 64)) & 1U;
    const auto& c = sparse_[col];
    return std::binary_search(c.begin(), c.end(), static_cast<std::uint32_t>(row));
  }

  std::vector<std::uint32_t> column(std::size_t col) const {
    if (!dense_) return sparse_[col];
    std::vector<std::uint32_t> out;
    for (std::size_t w = 0; w < words_; ++w) {
      std::uint64_t x = bits_[col * words_ + w];
      while (x) {
        int b = std::countr_zero(x);
        out.push_back(static_cast<std::uint32_t>(w * 64 + static_cast<std::size_t>(b)));
        x &= x - 1;
      }
    }
    return out;
  }

  bool column_empty(std::size_t col) const noexcept { return low(col) == kNoPivot; }

  /// Largest row index with a 1 in the column.
  std::int64_t low(std::size_t col) const noexcept {
    if (!dense_) return sparse_[col].empty() ? kNoPivot : static_cast<std::int64_t>(sparse_[col].back());
    for (std::size_t w = words_; w-- > 0;) {
      std::uint64_t x = bits_[col * words_ + w];
      if (x) return static_cast<std::int64_t>(w * 64 + 63 - static_cast<std::size_t>(std::countl_zero(x)));
    }
    return kNoPivot;
  }

  /// column dst += column src
  void add_column(std::size_t src, std::size_t dst) {
    if (dense_) {
      std::uint64_t* d = &bits_[dst * words_];
      const std::uint64_t* s = &bits_[src * words_];
      for (std::size_t w = 0; w < words_; ++w) d[w] ^= s[w];
      return;
    }
    const auto& s = sparse_[src];
    auto& d = sparse_[dst];
    scratch_.clear();
    std::set_symmetric_difference(d.begin(), d.end(), s.begin(), s.end(), std::back_inserter(scratch_));
    d.swap(scratch_);
  }

  void clear_column(std::size_t col) {
    if (dense_) std::fill_n(bits_.begin() + static_cast<std::ptrdiff_t>(col * words_), words_, 0);
    else sparse_[col].clear();
  }

  /// Appends a column (row indices need not be sorted; duplicates cancel).
  void append_column(std::vector<std::uint32_t> rows) {
    GF2Matrix tmp(nrows_, {std::move(rows)}, Storage::sparse);
    if (dense_) {
      bits_.resize(bits_.size() + words_, 0);
      for (auto r : tmp.sparse_[0]) bits_[ncols_ * words_ + r / 64] |= std::uint64_t{1} << (r % 64);
    } else {
      sparse_.push_back(std::move(tmp.sparse_[0]));
    }
    ++ncols_;
  }

private:
  std::size_t nrows_ = 0;
  std::size_t ncols_ = 0;
  bool dense_ = false;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> bits_;
  std::vector<std::vector<std::uint32_t>> sparse_;
  std::vector<std::uint32_t> scratch_;
};

/// Left-to-right column reduction with a pivot lookup table. Returns the low
/// row of each reduced column (kNoPivot for zero columns). Columns flagged in
/// `skip` are treated as already zero (clearing).
inline std::vector<std::int64_t> reduce_columns(GF2Matrix& m, const std::vector<bool>& skip = {}) {
  std::vector<std::int64_t> lows(m.ncols(), GF2Matrix::kNoPivot);
  std::vector<std::int64_t> pivot_of_row(m.nrows(), -1);
  for (std::size_t j = 0; j < m.ncols(); ++j) {
    if (!skip.empty() && skip[j]) {
      m.clear_column(j);
      continue;
    }
    std::int64_t low = m.low(j);
    while (low != GF2Matrix::kNoPivot && pivot_of_row[static_cast<std::size_t>(low)] >= 0) {
      m.add_column(static_cast<std::size_t>(pivot_of_row[static_cast<std::size_t>(low)]), j);
      low = m.low(j);
    }
    lows[j] = low;
    if (low != GF2Matrix::kNoPivot) pivot_of_row[static_cast<std::size_t>(low)] = static_cast<std::int64_t>(j);
  }
  return lows;
}

/// Rank over Z/2.
inline std::size_t gf2_rank(GF2Matrix m) {
  auto lows = reduce_columns(m);
  return static_cast<std::size_t>(
      std::count_if(lows.begin(), lows.end(), [](std::int64_t l) { return l != GF2Matrix::kNoPivot; }));
}

/// Basis of the kernel of m (as columns over m's column index space), by
/// reducing m while tracking the column operations.
inline std::vector<std::vector<std::uint32_t>> gf2_kernel_basis(GF2Matrix m) {
  const std::size_t n = m.ncols();
  std::vector<std::vector<std::uint32_t>> ops(n);
  for (std::uint32_t j = 0; j < n; ++j) ops[j] = {j};
  GF2Matrix v(n, std::move(ops), GF2Matrix::Storage::sparse);
  std::vector<std::int64_t> pivot_of_row(m.nrows(), -1);
  std::vector<std::vector<std::uint32_t>> kernel;
  for (std::size_t j = 0; j < n; ++j) {
    std::int64_t low = m.low(j);
    while (low != GF2Matrix::kNoPivot && pivot_of_row[static_cast<std::size_t>(low)] >= 0) {
      auto src = static_cast<std::size_t>(pivot_of_row[static_cast<std::size_t>(low)]);
      m.add_column(src, j);
      v.add_column(src, j);
      low = m.low(j);
    }
    if (low == GF2Matrix::kNoPivot) kernel.push_back(v.column(j));
    else pivot_of_row[static_cast<std::size_t>(low)] = static_cast<std::int64_t>(j);
  }
  return kernel;
}

}  // namespace mpbetti
