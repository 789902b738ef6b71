#include "oed/solvers.hpp"

#include <memory>

#include "oed/errors.hpp"

namespace oed {

namespace {

double relative_residual(const SparseMatrix& a, const Vector& x, const Vector& b) {
  const double nb = b.norm();
  if (nb == 0.0) return x.norm() == 0.0 ? 0.0 : (a * x).norm();
  return (b - a * x).norm() / nb;
}

template <typename SolveFn>
Vector refined_solve(const SparseMatrix& a, const Vector& b, SolveFn&& solve) {
  if (b.size() != a.rows()) throw ValidationError("right-hand side length does not match system size");
  Vector x = solve(b);
  double res = relative_residual(a, x, b);
  if (!(res <= kSolveResidualTol)) {
    x += solve(Vector(b - a * x));
    res = relative_residual(a, x, b);
  }
  if (!(res <= kSolveResidualTol) || !x.allFinite()) {
    throw NumericalError("sparse solve residual " + std::to_string(res) + " exceeds tolerance", res);
  }
  return x;
}

}  // namespace

SpdSolver::SpdSolver(const SparseMatrix& a) : a_(a) {
  if (a.rows() != a.cols()) throw ValidationError("SPD solver requires a square matrix");
  auto llt = std::make_shared<Llt>(a_);
  if (llt->info() != Eigen::Success) throw NumericalError("Cholesky factorization failed (matrix not SPD?)");
  llt_ = std::move(llt);
}

Vector SpdSolver::solve(const Vector& b) const {
  return refined_solve(a_, b, [this](const Vector& rhs) { return Vector(llt_->solve(rhs)); });
}

SparseMatrix SpdSolver::factor_l() const { return SparseMatrix(llt_->matrixL()); }

LuSolver::LuSolver(const SparseMatrix& a) : a_(a), at_(a.transpose()) {
  if (a.rows() != a.cols()) throw ValidationError("LU solver requires a square matrix");
  a_.makeCompressed();
  at_.makeCompressed();
  lu_ = std::make_shared<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
  lut_ = std::make_shared<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>>();
  lu_->compute(a_);
  lut_->compute(at_);
  if (lu_->info() != Eigen::Success || lut_->info() != Eigen::Success) {
    throw NumericalError("sparse LU factorization failed (singular system)");
  }
}

Vector LuSolver::solve(const Vector& b) const {
  return refined_solve(a_, b, [this](const Vector& rhs) { return Vector(lu_->solve(rhs)); });
}

Vector LuSolver::solve_transpose(const Vector& b) const {
  return refined_solve(at_, b, [this](const Vector& rhs) { return Vector(lut_->solve(rhs)); });
}

}  // namespace oed
