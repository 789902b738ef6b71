#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <memory>

#include "oed/types.hpp"

namespace oed {

// Relative residual accepted from a direct sparse solve before one step of
// iterative refinement is attempted.
inline constexpr double kSolveResidualTol = 1e-12;

// Sparse Cholesky factorization of an SPD matrix. Solves are const and may be
// called concurrently.
class SpdSolver {
 public:
  SpdSolver() = default;
  explicit SpdSolver(const SparseMatrix& a);

  Vector solve(const Vector& b) const;
  Index size() const noexcept { return a_.rows(); }
  const SparseMatrix& matrix() const noexcept { return a_; }

  // Lower factor L and permutation P with P A P^T = L L^T.
  SparseMatrix factor_l() const;
  const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>& permutation() const {
    return llt_->permutationP();
  }

 private:
  using Llt = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  SparseMatrix a_;
  // shared between copies
  std::shared_ptr<const Llt> llt_;
};

// Sparse LU of a general square matrix and of its transpose, so that both
// A x = b and A^T x = b are direct solves.
class LuSolver {
 public:
  LuSolver() = default;
  explicit LuSolver(const SparseMatrix& a);

  Vector solve(const Vector& b) const;
  Vector solve_transpose(const Vector& b) const;
  Index size() const noexcept { return a_.rows(); }

 private:
  SparseMatrix a_;
  SparseMatrix at_;
  std::shared_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
  std::shared_ptr<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lut_;
};

}  // namespace oed
