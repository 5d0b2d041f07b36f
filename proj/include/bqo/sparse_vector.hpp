#ifndef BQO_SPARSE_VECTOR_HPP
#define BQO_SPARSE_VECTOR_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace bqo {

using Index = std::uint32_t;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Sparse vector over hashed feature slots.
///
/// Entries are kept sorted by index with no duplicates and no stored zeros,
/// so two vectors with equal contents compare equal element by element.
template <typename Scalar>
class SparseVector {
 public:
  struct Entry {
    Index index;
    Scalar value;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  SparseVector() = default;

  /// Builds from arbitrary (index, value) pairs: sorts, merges duplicate
  /// indices by addition and drops zeros.
  static SparseVector from_pairs(std::vector<Entry> pairs) {
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Entry& a, const Entry& b) { return a.index < b.index; });
    SparseVector out;
    out.entries_.reserve(pairs.size());
    for (const Entry& e : pairs) {
      if (!out.entries_.empty() && out.entries_.back().index == e.index) {
        out.entries_.back().value += e.value;
      } else {
        out.entries_.push_back(e);
      }
    }
    std::erase_if(out.entries_, [](const Entry& e) { return e.value == Scalar(0); });
    return out;
  }

  /// Takes entries that already satisfy the invariants; throws otherwise.
  static SparseVector from_sorted(std::vector<Entry> entries) {
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (entries[k].value == Scalar(0)) {
        throw std::invalid_argument("SparseVector: explicit zero entry");
      }
      if (k > 0 && entries[k - 1].index >= entries[k].index) {
        throw std::invalid_argument("SparseVector: indices not strictly increasing");
      }
    }
    SparseVector out;
    out.entries_ = std::move(entries);
    return out;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t nonzeros() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  Scalar squared_norm() const {
    Scalar acc(0);
    for (const Entry& e : entries_) acc += e.value * e.value;
    return acc;
  }

  template <typename Derived>
  Scalar dot(const Eigen::MatrixBase<Derived>& dense) const {
    Scalar acc(0);
    for (const Entry& e : entries_) acc += e.value * dense(e.index);
    return acc;
  }

  Scalar dot(const SparseVector& other) const {
    Scalar acc(0);
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    while (a != entries_.end() && b != other.entries_.end()) {
      if (a->index < b->index) {
        ++a;
      } else if (b->index < a->index) {
        ++b;
      } else {
        acc += a->value * b->value;
        ++a;
        ++b;
      }
    }
    return acc;
  }

  /// dense += scale * this
  template <typename Derived>
  void add_to(Eigen::MatrixBase<Derived>& dense, Scalar scale) const {
    for (const Entry& e : entries_) dense(e.index) += scale * e.value;
  }

  /// Largest index + 1, or 0 when empty.
  Index extent() const { return entries_.empty() ? 0 : entries_.back().index + 1; }

  DenseVector<Scalar> to_dense(Eigen::Index dim) const {
    DenseVector<Scalar> out = DenseVector<Scalar>::Zero(dim);
    for (const Entry& e : entries_) out(e.index) = e.value;
    return out;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<Entry> entries_;
};

/// a + scale * b, merged in index order; cancellations are dropped.
template <typename Scalar>
SparseVector<Scalar> axpy(const SparseVector<Scalar>& a, Scalar scale,
                          const SparseVector<Scalar>& b) {
  using Entry = typename SparseVector<Scalar>::Entry;
  std::vector<Entry> out;
  out.reserve(a.nonzeros() + b.nonzeros());
  auto x = a.entries().begin();
  auto y = b.entries().begin();
  auto push = [&out](Index index, Scalar value) {
    if (value != Scalar(0)) out.push_back({index, value});
  };
  while (x != a.entries().end() || y != b.entries().end()) {
    if (y == b.entries().end() || (x != a.entries().end() && x->index < y->index)) {
      push(x->index, x->value);
      ++x;
    } else if (x == a.entries().end() || y->index < x->index) {
      push(y->index, scale * y->value);
      ++y;
    } else {
      push(x->index, x->value + scale * y->value);
      ++x;
      ++y;
    }
  }
  return SparseVector<Scalar>::from_sorted(std::move(out));
}

template <typename Scalar>
SparseVector<Scalar> operator-(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b) {
  return axpy(a, Scalar(-1), b);
}

template <typename Scalar>
SparseVector<Scalar> operator+(const SparseVector<Scalar>& a, const SparseVector<Scalar>& b) {
  return axpy(a, Scalar(1), b);
}

using SparseVec = SparseVector<double>;
using ModelVector = DenseVector<double>;

}  // namespace bqo

#endif  // BQO_SPARSE_VECTOR_HPP
