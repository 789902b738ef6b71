#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include "oed/mesh.hpp"
#include "oed/solvers.hpp"

namespace oed {

// Rotated anisotropy tensor with principal diffusivities theta1 (along the
// direction at `angle` from the y axis) and theta2.
Eigen::Matrix2d anisotropy_tensor(double theta1, double theta2, double angle);

struct PriorParameters {
  double gamma = 1.0;
  double delta = 8.0;
  Eigen::Matrix2d theta = Eigen::Matrix2d::Identity();
  // Robin boundary coefficient; sqrt(gamma * delta) when unset. Zero disables
  // the boundary term.
  std::optional<double> robin;
};

// Discrete Gaussian prior N(mean, A^-1 M A^-1) with
// A = gamma K_theta + delta M + beta M_boundary.
//
// Immutable after construction; every action is const and safe to call from
// several threads.
class PriorOperator {
 public:
  PriorOperator(const Grid2D& grid, const PriorParameters& params, Vector mean);

  const Grid2D& grid() const noexcept { return grid_; }
  Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  double gamma() const noexcept { return gamma_; }
  double delta() const noexcept { return delta_; }
  double beta() const noexcept { return beta_; }
  const Eigen::Matrix2d& theta() const noexcept { return theta_; }
  const SparseMatrix& a() const noexcept { return a_.matrix(); }
  const SparseMatrix& m() const noexcept { return m_.matrix(); }

  // A^-1 M A^-1 v
  Vector apply_covariance(const Vector& v) const;
  // A M^-1 A v
  Vector apply_precision(const Vector& v) const;
  // <v, A M^-1 A v>
  double norm_sq(const Vector& v) const;

  // mean + A^-1 M_L^{1/2} xi with M_L the lumped mass and xi ~ N(0, I).
  Vector sample(std::uint64_t seed) const;
  Vector sample(std::mt19937_64& rng) const;

  // Factor S with S S^T = A^-1 M A^-1 (consistent mass, via its Cholesky factor).
  Vector apply_sqrt(const Vector& v) const;
  Vector apply_sqrt_transpose(const Vector& w) const;

  // diag(A^-1 M A^-1), one column at a time.
  Vector covariance_diagonal() const;
  // diag(A^-1 M_L A^-1): the covariance actually realised by sample().
  Vector lumped_covariance_column(Index j) const;

 private:
  void check_length(const Vector& v) const;

  Grid2D grid_;
  double gamma_;
  double delta_;
  double beta_;
  Eigen::Matrix2d theta_;
  Vector mean_;
  SpdSolver a_;
  SpdSolver m_;
  Vector lumped_sqrt_;
  SparseMatrix mass_l_;
};

// Validating factory: gamma, delta > 0, theta SPD, mean length n.
PriorOperator build_prior(const Grid2D& grid, double gamma, double delta, const Eigen::Matrix2d& theta,
                          const Vector& mean);

}  // namespace oed
