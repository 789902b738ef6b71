#include "oed/design.hpp"

#include <algorithm>
#include <numeric>

#include "oed/errors.hpp"

namespace oed {

Design::Design(std::vector<Index> indices, Index candidates)
    : indices_(std::move(indices)), candidates_(candidates) {
  if (candidates < 0) throw ValidationError("candidate count must be non-negative");
  std::vector<bool> seen(static_cast<std::size_t>(candidates), false);
  for (Index j : indices_) {
    if (j < 0 || j >= candidates) {
      throw ValidationError("design index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(candidates) + ")");
    }
    if (seen[static_cast<std::size_t>(j)]) throw ValidationError("duplicate design index " + std::to_string(j));
    seen[static_cast<std::size_t>(j)] = true;
  }
}

Design Design::all(Index candidates) {
  std::vector<Index> idx(static_cast<std::size_t>(candidates));
  std::iota(idx.begin(), idx.end(), Index(0));
  return Design(std::move(idx), candidates);
}

bool Design::contains(Index j) const { return std::find(indices_.begin(), indices_.end(), j) != indices_.end(); }

Design Design::sorted() const {
  Design out = *this;
  std::sort(out.indices_.begin(), out.indices_.end());
  return out;
}

Design Design::with(Index j) const {
  auto idx = indices_;
  idx.push_back(j);
  return Design(std::move(idx), candidates_);
}

Design Design::replaced(Index position, Index j) const {
  auto idx = indices_;
  idx.at(static_cast<std::size_t>(position)) = j;
  return Design(std::move(idx), candidates_);
}

Vector Design::select(const Vector& full) const {
  if (full.size() != candidates_) throw ValidationError("vector length does not match candidate count");
  Vector out(size());
  for (Index t = 0; t < size(); ++t) out[t] = full[indices_[static_cast<std::size_t>(t)]];
  return out;
}

Vector Design::scatter(const Vector& selected) const {
  if (selected.size() != size()) throw ValidationError("vector length does not match design size");
  Vector out = Vector::Zero(candidates_);
  for (Index t = 0; t < size(); ++t) out[indices_[static_cast<std::size_t>(t)]] = selected[t];
  return out;
}

Matrix Design::select_rows(const Matrix& full) const {
  if (full.rows() != candidates_) throw ValidationError("matrix rows do not match candidate count");
  Matrix out(size(), full.cols());
  for (Index t = 0; t < size(); ++t) out.row(t) = full.row(indices_[static_cast<std::size_t>(t)]);
  return out;
}

std::string Design::to_string() const {
  std::string s = "{";
  for (std::size_t t = 0; t < indices_.size(); ++t) {
    if (t) s += ",";
    s += std::to_string(indices_[t]);
  }
  return s + "}";
}

}  // namespace oed
