#pragma once

// Partitions of {0, ..., N-1} with labels in {0, ..., K_up-1}, their
// canonical (first-appearance) form, contingency tables, and a
// restricted-growth-string enumerator used for exhaustive checks.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gepl/error.hpp"

namespace gepl {

using Label = std::uint32_t;

inline constexpr Label kNoLabel = std::numeric_limits<Label>::max();

/// Allocation of N items to at most K_up groups. Labels are zero-based;
/// empty groups are allowed implicitly.
class Partition {
 public:
  Partition() = default;

  Partition(std::vector<Label> labels, std::size_t k_up)
      : labels_(std::move(labels)), k_up_(k_up) {
    if (labels_.empty()) throw InvalidArgument("partition must contain at least one item");
    if (k_up_ == 0) throw InvalidArgument("K_up must be at least 1");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] >= k_up_) {
        throw InvalidArgument("label " + std::to_string(labels_[i]) + " of item " +
                              std::to_string(i) + " exceeds K_up=" + std::to_string(k_up_));
      }
    }
  }

  /// K_up defaults to the smallest value admitting every label.
  explicit Partition(std::vector<Label> labels)
      : Partition(labels, labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1) {}

  std::size_t size() const { return labels_.size(); }
  std::size_t k_up() const { return k_up_; }
  std::span<const Label> labels() const { return labels_; }
  Label operator[](std::size_t i) const { return labels_[i]; }

  /// Group sizes indexed by label; length K_up.
  std::vector<std::size_t> group_sizes() const {
    std::vector<std::size_t> sizes(k_up_, 0);
    for (Label l : labels_) ++sizes[l];
    return sizes;
  }

  std::size_t occupied() const {
    auto sizes = group_sizes();
    return static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](std::size_t n) { return n > 0; }));
  }

  /// Relabels item i in place.
  void assign(std::size_t i, Label s) {
    if (i >= labels_.size()) throw InvalidArgument("item index " + std::to_string(i) + " out of range");
    if (s >= k_up_) throw InvalidArgument("target label " + std::to_string(s) + " exceeds K_up");
    labels_[i] = s;
  }

  friend bool operator==(const Partition&, const Partition&) = default;

 private:

  std::vector<Label> labels_;
  std::size_t k_up_ = 0;
};

/// First-appearance relabeling; lexicographic order on `labels` realizes
/// the base-K_up identifier ordering without overflow.
struct CanonicalForm {
  std::vector<Label> labels;

  std::size_t num_groups() const {
    return labels.empty() ? 0 : static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  }
  Partition to_partition(std::size_t k_up) const { return Partition(labels, k_up); }

  friend auto operator<=>(const CanonicalForm&, const CanonicalForm&) = default;
  friend bool operator==(const CanonicalForm&, const CanonicalForm&) = default;
};

inline CanonicalForm canonicalize(std::span<const Label> labels) {
  CanonicalForm out;
  out.labels.resize(labels.size());
  if (labels.empty()) return out;
  std::vector<Label> map(static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1, kNoLabel);
  Label next = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Label& m = map[labels[i]];
    if (m == kNoLabel) m = next++;
    out.labels[i] = m;
  }
  return out;
}

inline CanonicalForm canonicalize(const Partition& p) { return canonicalize(p.labels()); }

inline bool equivalent(const Partition& a, const Partition& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("cannot compare partitions of " + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()) + " items");
  }
  return canonicalize(a) == canonicalize(b);
}

/// Returns `a` with item i relabeled to s.
inline Partition apply_move(const Partition& a, std::size_t i, Label s) {
  Partition out = a;
  out.assign(i, s);
  return out;
}

/// Dense co-classification counts between two labelings.
class ContingencyTable {
 public:
  ContingencyTable() = default;
  ContingencyTable(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), counts_(rows * cols, 0), row_sums_(rows, 0), col_sums_(cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t total() const { return total_; }
  std::size_t at(std::size_t g, std::size_t h) const { return counts_[g * cols_ + h]; }
  std::size_t row_sum(std::size_t g) const { return row_sums_[g]; }
  std::size_t col_sum(std::size_t h) const { return col_sums_[h]; }
  std::span<const std::size_t> counts() const { return counts_; }
  std::span<const std::size_t> row_sums() const { return row_sums_; }
  std::span<const std::size_t> col_sums() const { return col_sums_; }

  void add(std::size_t g, std::size_t h) {
    ++counts_[g * cols_ + h];
    ++row_sums_[g];
    ++col_sums_[h];
    ++total_;
  }

  void remove(std::size_t g, std::size_t h) {
    if (counts_[g * cols_ + h] == 0) {
      throw InvalidArgument("contingency cell (" + std::to_string(g) + "," + std::to_string(h) + ") is already zero");
    }
    --counts_[g * cols_ + h];
    --row_sums_[g];
    --col_sums_[h];
    --total_;
  }

  /// Drops all-zero rows and columns, keeping the order of the rest.
  ContingencyTable compact() const {
    std::vector<std::size_t> keep_rows, keep_cols;
    for (std::size_t g = 0; g < rows_; ++g)
      if (row_sums_[g] > 0) keep_rows.push_back(g);
    for (std::size_t h = 0; h < cols_; ++h)
      if (col_sums_[h] > 0) keep_cols.push_back(h);
    ContingencyTable out(keep_rows.size(), keep_cols.size());
    for (std::size_t a = 0; a < keep_rows.size(); ++a) {
      for (std::size_t b = 0; b < keep_cols.size(); ++b) {
        const std::size_t n = at(keep_rows[a], keep_cols[b]);
        out.counts_[a * out.cols_ + b] = n;
        out.row_sums_[a] += n;
        out.col_sums_[b] += n;
        out.total_ += n;
      }
    }
    return out;
  }

  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> row_sums_;
  std::vector<std::size_t> col_sums_;
  std::size_t total_ = 0;
};

/// Table indexed by raw labels: K_up(a) rows and K_up(z) columns, empty
/// groups included.
inline ContingencyTable contingency_raw(const Partition& a, const Partition& z) {
  if (a.size() != z.size()) throw InvalidArgument("contingency requires partitions of equal length");
  ContingencyTable t(a.k_up(), z.k_up());
  for (std::size_t i = 0; i < a.size(); ++i) t.add(a[i], z[i]);
  return t;
}

/// Table over occupied groups only, rows and columns in canonical order.
inline ContingencyTable contingency(const Partition& a, const Partition& z) {
  if (a.size() != z.size()) throw InvalidArgument("contingency requires partitions of equal length");
  const CanonicalForm ca = canonicalize(a);
  const CanonicalForm cz = canonicalize(z);
  ContingencyTable t(ca.num_groups(), cz.num_groups());
  for (std::size_t i = 0; i < a.size(); ++i) t.add(ca.labels[i], cz.labels[i]);
  return t;
}

/// Updates a raw-label table for the move of item i from group r to s.
/// Only cells (r, z_i), (s, z_i) and the row sums r, s change. With
/// `validate` set the incoming table is checked against a full recount.
inline ContingencyTable contingency_move_delta(const ContingencyTable& t, const Partition& a, const Partition& z,
                                               std::size_t i, Label r, Label s, bool validate = false) {
  if (a.size() != z.size()) throw InvalidArgument("contingency requires partitions of equal length");
  if (i >= a.size()) throw InvalidArgument("item index out of range");
  if (a[i] != r) throw InvalidArgument("item " + std::to_string(i) + " is not in group " + std::to_string(r));
  if (r >= t.rows() || s >= t.rows() || z[i] >= t.cols()) throw InvalidArgument("move outside the table dimensions");
  if (validate && !(contingency_raw(a, z) == t)) throw InvalidArgument("cached contingency table is inconsistent");
  ContingencyTable out = t;
  if (r == s) return out;
  out.remove(r, z[i]);
  out.add(s, z[i]);
  return out;
}

/// Largest N accepted by the exhaustive enumerator (Bell(12) = 4,213,597).
inline constexpr std::size_t kMaxEnumerationItems = 12;

/// Streams every set partition of N items exactly once as a
/// restricted-growth string, in lexicographic order.
class PartitionEnumerator {
 public:
  explicit PartitionEnumerator(std::size_t n) : labels_(n, 0), maxima_(n, 0) {
    if (n == 0) throw InvalidArgument("enumeration needs at least one item");
    if (n > kMaxEnumerationItems) {
      throw InvalidArgument("refusing to enumerate partitions of " + std::to_string(n) + " items (limit is " +
                           std::to_string(kMaxEnumerationItems) + ")");
    }
  }

  std::span<const Label> current() const { return labels_; }
  CanonicalForm form() const { return CanonicalForm{labels_}; }

  /// Advances to the next partition; false once the stream is exhausted.
  bool next() {
    const std::size_t n = labels_.size();
    for (std::size_t i = n; i-- > 1;) {
      if (labels_[i] <= maxima_[i - 1]) {
        ++labels_[i];
        const Label m = std::max(maxima_[i - 1], labels_[i]);
        maxima_[i] = m;
        for (std::size_t j = i + 1; j < n; ++j) {
          labels_[j] = 0;
          maxima_[j] = m;
        }
        return true;
      }
    }
    return false;
  }

 private:
  std::vector<Label> labels_;
  std::vector<Label> maxima_;  // maxima_[i] = max(labels_[0..i])
};

template <class Fn>
void for_each_partition(std::size_t n, Fn&& fn) {
  PartitionEnumerator e(n);
  do {
    fn(e.current());
  } while (e.next());
}

inline std::vector<CanonicalForm> enumerate_partitions(std::size_t n) {
  std::vector<CanonicalForm> out;
  for_each_partition(n, [&](std::span<const Label> l) { out.push_back(CanonicalForm{{l.begin(), l.end()}}); });
  return out;
}

}  // namespace gepl
