#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "volseg/error.hpp"

namespace volseg {

/// Joint label counts n_uv of two labelings, grown on demand. Labels are
/// small non-negative integers (cluster indices).
class ContingencyTable {
 public:
  void add(std::uint32_t a, std::uint32_t b, std::uint64_t times = 1) {
    if (a >= rows_.size()) grow(a + 1, cols_.size());
    if (b >= cols_.size()) grow(rows_.size(), b + 1);
    cells_[a * cols_.size() + b] += times;
    rows_[a] += times;
    cols_[b] += times;
    total_ += times;
  }

  template <class A, class B>
  void add(std::span<const A> a, std::span<const B> b) {
    if (a.size() != b.size()) {
      throw Error(ErrorCode::LengthMismatch,
                  std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " labels");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      add(static_cast<std::uint32_t>(a[i]), static_cast<std::uint32_t>(b[i]));
    }
  }

  /// Additive merge of a table built over a disjoint range.
  void merge(const ContingencyTable& other) {
    for (std::size_t u = 0; u < other.rows_.size(); ++u) {
      for (std::size_t v = 0; v < other.cols_.size(); ++v) {
        if (const auto n = other.at(u, v)) add(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), n);
      }
    }
  }

  std::uint64_t at(std::size_t u, std::size_t v) const {
    return u < rows_.size() && v < cols_.size() ? cells_[u * cols_.size() + v] : 0;
  }
  const std::vector<std::uint64_t>& row_sums() const noexcept { return rows_; }
  const std::vector<std::uint64_t>& col_sums() const noexcept { return cols_; }
  std::size_t rows() const noexcept { return rows_.size(); }
  std::size_t cols() const noexcept { return cols_.size(); }
  std::uint64_t total() const noexcept { return total_; }

 private:
  void grow(std::size_t rows, std::size_t cols) {
    std::vector<std::uint64_t> cells(rows * cols, 0);
    for (std::size_t u = 0; u < rows_.size(); ++u) {
      std::copy_n(cells_.begin() + static_cast<std::ptrdiff_t>(u * cols_.size()), cols_.size(),
                  cells.begin() + static_cast<std::ptrdiff_t>(u * cols));
    }
    cells_ = std::move(cells);
    rows_.resize(rows, 0);
    cols_.resize(cols, 0);
  }

  std::vector<std::uint64_t> cells_;
  std::vector<std::uint64_t> rows_;
  std::vector<std::uint64_t> cols_;
  std::uint64_t total_ = 0;
};

template <class A, class B>
ContingencyTable build_contingency(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " labels");
  }
  if (a.empty()) throw Error(ErrorCode::TooFewItems, "labelings are empty");
  ContingencyTable t;
  t.add(a, b);
  return t;
}

namespace detail {
inline double pairs(std::uint64_t n) {
  return 0.5 * static_cast<double>(n) * static_cast<double>(n == 0 ? 0 : n - 1);
}
}  // namespace detail

/// TP / sqrt((TP + FP)(TP + FN)) over item pairs; 0 when either labeling
/// has no same-cluster pair.
inline double fowlkes_mallows(const ContingencyTable& t) {
  if (t.total() < 2) throw Error(ErrorCode::TooFewItems, "need at least two items");
  double tp = 0.0;
  for (std::size_t u = 0; u < t.rows(); ++u) {
    for (std::size_t v = 0; v < t.cols(); ++v) tp += detail::pairs(t.at(u, v));
  }
  double pa = 0.0;
  double pb = 0.0;
  for (auto n : t.row_sums()) pa += detail::pairs(n);
  for (auto n : t.col_sums()) pb += detail::pairs(n);
  if (pa == 0.0 || pb == 0.0) return 0.0;
  return tp / std::sqrt(pa * pb);
}

/// I(A; B) / ((H(A) + H(B)) / 2), natural logs. 1 when both labelings are
/// constant, 0 when exactly one is.
///
/// Entropy and MI terms share one expression, (c/n) log(x), and are summed
/// in sorted order, so labelings equal up to relabeling give I == H(A) ==
/// H(B) bit for bit and score exactly 1.
inline double nmi_mean(const ContingencyTable& t) {
  if (t.total() == 0) throw Error(ErrorCode::TooFewItems, "need at least one item");
  const double n = static_cast<double>(t.total());
  const auto sorted_sum = [](std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double x : terms) s += x;
    return s;
  };
  std::vector<double> terms;
  const auto entropy = [&](const std::vector<std::uint64_t>& sums) {
    terms.clear();
    for (auto c : sums) {
      if (c == 0) continue;
      const double count = static_cast<double>(c);
      terms.push_back(count / n * std::log(count * n / (count * count)));
    }
    return sorted_sum(terms);
  };
  const double ha = entropy(t.row_sums());
  const double hb = entropy(t.col_sums());
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  terms.clear();
  for (std::size_t u = 0; u < t.rows(); ++u) {
    for (std::size_t v = 0; v < t.cols(); ++v) {
      const auto c = t.at(u, v);
      if (c == 0) continue;
      const double joint = static_cast<double>(c);
      const double marginals = static_cast<double>(t.row_sums()[u]) * static_cast<double>(t.col_sums()[v]);
      terms.push_back(joint / n * std::log(joint * n / marginals));
    }
  }
  const double mi = sorted_sum(terms);
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

}  // namespace volseg
