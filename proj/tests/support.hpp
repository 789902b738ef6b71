#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "oed/forward_model.hpp"
#include "oed/lowrank.hpp"
#include "oed/prior.hpp"

namespace oedtest {

using oed::Index;
using oed::Matrix;
using oed::Vector;

inline double rel_err(const Vector& a, const Vector& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.norm(), 1e-300);
  return (a - b).norm() / scale;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline Vector random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Matrix random_orthonormal(Index d, Index k, std::mt19937_64& rng) {
  Matrix g(d, k);
  for (Index j = 0; j < k; ++j) g.col(j) = random_vector(d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(d, k);
}

// Q diag(eigs) Q^T with a random orthogonal Q.
inline Matrix spd_with_spectrum(const Vector& eigs, std::mt19937_64& rng) {
  const Matrix q = random_orthonormal(eigs.size(), eigs.size(), rng);
  return q * eigs.asDiagonal() * q.transpose();
}

// Random SPD matrix with a spread-out spectrum.
inline Matrix random_spd(Index d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 2.0);
  Vector eigs(d);
  for (Index i = 0; i < d; ++i) eigs[i] = std::pow(10.0, u(rng));
  return spd_with_spectrum(eigs, rng);
}

inline Matrix dense(const oed::SparseMatrix& a) { return Matrix(a); }

// A^-1 M A^-1 from dense LU, independent of the sparse factorizations.
inline Matrix dense_covariance(const oed::PriorOperator& prior) {
  const Matrix a = dense(prior.a());
  const Matrix m = dense(prior.m());
  Eigen::PartialPivLU<Matrix> lu(a);
  const Matrix ainv = lu.inverse();
  return ainv * m * ainv;
}

inline Matrix dense_precision(const oed::PriorOperator& prior) {
  const Matrix a = dense(prior.a());
  const Matrix m = dense(prior.m());
  return a * Eigen::PartialPivLU<Matrix>(m).solve(a);
}

// J assembled column by column from jacobian_action(e_i).
inline Matrix dense_jacobian(const oed::LinearizedModel& lin, Index n) {
  Vector e = Vector::Zero(n);
  const Index d = lin.jacobian_action(e).size();
  Matrix j(d, n);
  for (Index i = 0; i < n; ++i) {
    e[i] = 1.0;
    j.col(i) = lin.jacobian_action(e);
    e[i] = 0.0;
  }
  return j;
}

inline double half_logdet_identity_plus(const Matrix& g) {
  const Matrix s = Matrix::Identity(g.rows(), g.cols()) + 0.5 * (g + g.transpose());
  return 0.5 * std::log(s.determinant());
}

}  // namespace oedtest
