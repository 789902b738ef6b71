#include "oed/prior.hpp"

#include <cmath>

#include "oed/errors.hpp"

namespace oed {

Eigen::Matrix2d anisotropy_tensor(double theta1, double theta2, double angle) {
  const double s = std::sin(angle);
  const double c = std::cos(angle);
  Eigen::Matrix2d t;
  t << theta1 * s * s + theta2 * c * c, (theta1 - theta2) * s * c,
      (theta1 - theta2) * s * c, theta1 * c * c + theta2 * s * s;
  return t;
}

namespace {

void validate(const PriorParameters& p, Index n, const Vector& mean) {
  if (!(p.gamma > 0.0) || !(p.delta > 0.0)) throw ValidationError("prior gamma and delta must be positive");
  const Eigen::Matrix2d& t = p.theta;
  if (!t.allFinite() || std::abs(t(0, 1) - t(1, 0)) > 1e-14 * (1.0 + t.cwiseAbs().maxCoeff())) {
    throw ValidationError("prior anisotropy theta must be symmetric");
  }
  if (!(t(0, 0) > 0.0) || !(t.determinant() > 0.0)) {
    throw ValidationError("prior anisotropy theta must be positive definite");
  }
  if (p.robin && !(*p.robin >= 0.0)) throw ValidationError("Robin coefficient must be non-negative");
  if (mean.size() != n) {
    throw ValidationError("prior mean has length " + std::to_string(mean.size()) + ", expected " +
                          std::to_string(n));
  }
}

SparseMatrix assemble_operator(const Grid2D& grid, const PriorParameters& p, double beta) {
  SparseMatrix a = p.gamma * assemble_stiffness(grid, p.theta) + p.delta * assemble_mass(grid);
  if (beta > 0.0) a += beta * assemble_boundary_mass(grid);
  a.makeCompressed();
  return a;
}

}  // namespace

PriorOperator::PriorOperator(const Grid2D& grid, const PriorParameters& params, Vector mean)
    : grid_(grid),
      gamma_(params.gamma),
      delta_(params.delta),
      beta_(0.0),
      theta_(params.theta),
      mean_(std::move(mean)) {
  validate(params, grid.vertex_count(), mean_);
  beta_ = params.robin.value_or(std::sqrt(params.gamma * params.delta));
  a_ = SpdSolver(assemble_operator(grid_, params, beta_));
  m_ = SpdSolver(assemble_mass(grid_));
  lumped_sqrt_ = lumped_mass(grid_).cwiseSqrt();
  mass_l_ = m_.factor_l();
}

void PriorOperator::check_length(const Vector& v) const {
  if (v.size() != dim()) {
    throw ValidationError("parameter vector has length " + std::to_string(v.size()) + ", expected " +
                          std::to_string(dim()));
  }
}

Vector PriorOperator::apply_covariance(const Vector& v) const {
  check_length(v);
  return a_.solve(m_.matrix() * a_.solve(v));
}

Vector PriorOperator::apply_precision(const Vector& v) const {
  check_length(v);
  return a_.matrix() * m_.solve(a_.matrix() * v);
}

double PriorOperator::norm_sq(const Vector& v) const { return v.dot(apply_precision(v)); }

Vector PriorOperator::sample(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector xi(dim());
  for (Index i = 0; i < dim(); ++i) xi[i] = normal(rng);
  return mean_ + a_.solve(lumped_sqrt_.cwiseProduct(xi));
}

Vector PriorOperator::sample(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  return sample(rng);
}

Vector PriorOperator::apply_sqrt(const Vector& v) const {
  check_length(v);
  // P M P^T = L L^T  =>  M = P^T L L^T P  and  S = A^-1 P^T L.
  const Vector lv = mass_l_ * v;
  return a_.solve(m_.permutation().inverse() * lv);
}

Vector PriorOperator::apply_sqrt_transpose(const Vector& w) const {
  check_length(w);
  const Vector pw = m_.permutation() * a_.solve(w);
  return mass_l_.transpose() * pw;
}

Vector PriorOperator::covariance_diagonal() const {
  Vector diag(dim());
  Vector e = Vector::Zero(dim());
  for (Index j = 0; j < dim(); ++j) {
    e[j] = 1.0;
    // (A^-1 M A^-1)_jj = ||L^T P A^-1 e_j||^2
    diag[j] = apply_sqrt_transpose(e).squaredNorm();
    e[j] = 0.0;
  }
  return diag;
}

Vector PriorOperator::lumped_covariance_column(Index j) const {
  Vector e = Vector::Zero(dim());
  e[j] = 1.0;
  const Vector t = a_.solve(e);
  return a_.solve(lumped_sqrt_.cwiseAbs2().cwiseProduct(t));
}

PriorOperator build_prior(const Grid2D& grid, double gamma, double delta, const Eigen::Matrix2d& theta,
                          const Vector& mean) {
  PriorParameters p;
  p.gamma = gamma;
  p.delta = delta;
  p.theta = theta;
  return PriorOperator(grid, p, mean);
}

}  // namespace oed
