#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "oed/forward_model.hpp"
#include "oed/prior.hpp"

namespace oed {

// Action of a symmetric d x d operator on a block of column vectors.
using SymmetricOperator = std::function<Matrix(const Matrix&)>;

// U_k Sigma_k U_k^T approximation of the data-space Hessian H_d.
struct LowRankHessian {
  enum class Trailing { none, estimate, exact };

  Matrix u;                  // d x k, orthonormal columns
  Vector eigenvalues;        // k, descending, >= 0
  Vector trailing;           // eigenvalues beyond k (sketch estimate or exact)
  Trailing trailing_kind = Trailing::none;
  bool rank_deficient = false;  // sketch lost rank; k was reduced
  long long operator_actions = 0;

  Index dim() const noexcept { return u.rows(); }
  Index rank() const noexcept { return u.cols(); }
};

// Single-pass randomized eigensolver: Y = H Omega, Y = QR, B = Q^T H Q,
// B = Z Sigma Z^T, U_k = Q Z[:, :k]. Applies `op` to exactly 2(k + p) vectors.
// Requires k + p <= d.
LowRankHessian randomized_eigs(const SymmetricOperator& op, Index d, Index k, Index p, std::uint64_t seed);

// Dense symmetric matrix as an operator.
SymmetricOperator dense_operator(const Matrix& h);

// H_d z = Gamma_n^{-1/2} J Gamma_pr J^T Gamma_n^{-1/2} z.
Vector hd_action(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise, const Vector& z);

// Linearizes `model` at m and runs randomized_eigs over hd_action.
LowRankHessian build_lowrank(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                             const Vector& m, Index k, Index p, std::uint64_t seed);
LowRankHessian build_lowrank(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise,
                             Index k, Index p, std::uint64_t seed);

// d x d matrix assembled column by column from hd_action (d actions).
Matrix assemble_hd(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise);

// Full eigendecomposition of a dense symmetric H_d, truncated to k with the
// remaining eigenvalues kept as the exact trailing spectrum.
LowRankHessian exact_lowrank(const Matrix& h, Index k);

// Keeps the smallest k with lambda_{k+1} / lambda_1 < ratio; dropped
// eigenvalues move to the trailing spectrum.
LowRankHessian truncate_adaptive(const LowRankHessian& lr, double ratio = 1e-6);

// Persistence: <stem>_eigenvalues.csv (index,eigenvalue,role) and <stem>_U.csv
// (one line per column of U_k). Values use round-trip precision.
void save_lowrank(const LowRankHessian& lr, const std::string& stem);
LowRankHessian load_lowrank(const std::string& stem);

}  // namespace oed
