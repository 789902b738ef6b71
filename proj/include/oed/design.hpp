#pragma once

#include <string>
#include <vector>

#include "oed/types.hpp"

namespace oed {

// An ordered selection of r distinct candidate indices out of d. Stands in for
// the r x d boolean row-selection matrix W.
class Design {
 public:
  Design() = default;
  // Throws ValidationError on duplicates or out-of-range indices.
  Design(std::vector<Index> indices, Index candidates);

  static Design all(Index candidates);
  static Design empty(Index candidates) { return Design({}, candidates); }

  const std::vector<Index>& indices() const noexcept { return indices_; }
  Index size() const noexcept { return Index(indices_.size()); }
  Index candidates() const noexcept { return candidates_; }
  bool empty() const noexcept { return indices_.empty(); }
  bool contains(Index j) const;
  Index operator[](Index t) const { return indices_[static_cast<std::size_t>(t)]; }

  // Same index set, ascending order.
  Design sorted() const;
  Design with(Index j) const;
  Design replaced(Index position, Index j) const;

  // W v: rows of v at the selected indices.
  Vector select(const Vector& full) const;
  // W^T z: scatter back into a length-d vector.
  Vector scatter(const Vector& selected) const;
  Matrix select_rows(const Matrix& full) const;

  std::string to_string() const;

  friend bool operator==(const Design& a, const Design& b) {
    return a.candidates_ == b.candidates_ && a.indices_ == b.indices_;
  }

 private:
  std::vector<Index> indices_;
  Index candidates_ = 0;
};

}  // namespace oed
