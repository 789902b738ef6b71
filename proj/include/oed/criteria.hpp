#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oed/design.hpp"
#include "oed/lowrank.hpp"

namespace oed {

enum class EigMode { linear_exact, linear_lowrank, la_map, la_fixed_map, la_prior_sample, dlmc };

std::string to_string(EigMode mode);
EigMode eig_mode_from_string(const std::string& name);

struct EvaluationCounters {
  long long criterion_evaluations = 0;
  long long operator_actions = 0;
  long long map_solves = 0;
};

struct EIGResult {
  Design design;
  double value = 0.0;
  EigMode mode = EigMode::linear_lowrank;
  std::optional<double> bound;
  EvaluationCounters counters;
};

// 1/2 logdet(I_r + W U Sigma U^T W^T) via Cholesky of the r x r matrix.
double approx_eig_linear(const LowRankHessian& lr, const Design& design);

// 1/2 logdet(I_r + W H_d W^T) with W H_d W^T assembled from r hd_action calls.
// Dense path only: throws CapabilityError above `max_dense` sensors.
double exact_eig_linear(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise,
                        const Design& design, Index max_dense = 2000);

// 1/2 sum_{i>k} log(1 + lambda_i) over the trailing spectrum. Certified when
// the trailing eigenvalues are exact, an estimate otherwise.
double eig_gap_bound(const LowRankHessian& lr);

// Descending eigenvalues of (W U) Sigma (W U)^T, at most min(r, k) of them.
Vector restricted_eigenvalues(const LowRankHessian& lr, const Design& design);

// sum_j log(1 + l_j) - l_j / (1 + l_j) over eigenvalues l_j >= 0.
double laplace_information(const Vector& eigenvalues);

// One training datum for the Laplace criteria.
struct TrainingSample {
  Vector parameter;     // prior draw m_i
  Vector data;          // F_all(m_i) + noise, length d
  Vector reference;     // linearization point: fixed MAP or the prior draw
  LowRankHessian lowrank;
  double prior_term = 0.0;  // 1/2 ||reference - m_pr||^2 in the prior precision
};

enum class LaMode { map, fixed_map, prior_sample };

// (1/N) sum_i 1/2 [ sum_j (log(1 + l_ij) - l_ij / (1 + l_ij)) + 2 prior_term_i ].
// With reduced = true the design-independent prior terms are dropped.
double la_eig(std::span<const TrainingSample> samples, const Design& design, LaMode mode, bool reduced = false);

// Nested Monte Carlo reference estimator of the EIG for the design-restricted
// Gaussian likelihood. Forward evaluations are made once at construction
// (outer draws, their noise and an independent inner set), so evaluating many
// designs reuses common random numbers.
class DlmcEstimator {
 public:
  using Sampler = std::function<Vector(std::uint64_t seed)>;
  using Forward = std::function<Vector(const Vector&)>;

  DlmcEstimator(const Sampler& sample_prior, const Forward& forward_all, const Vector& sigma, Index n_outer,
                Index n_inner, std::uint64_t seed);
  DlmcEstimator(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, Index n_outer,
                Index n_inner, std::uint64_t seed);

  double evaluate(const Design& design) const;
  // Standard error of the outer average for the given design.
  double standard_error(const Design& design) const;

  Index outer() const noexcept { return outer_data_.cols(); }
  Index inner() const noexcept { return inner_pred_.cols(); }

 private:
  Vector terms(const Design& design) const;

  Vector sigma_;
  Matrix outer_pred_;  // d x N_outer, F(m_i)
  Matrix outer_data_;  // d x N_outer, F(m_i) + eps_i
  Matrix inner_pred_;  // d x N_inner, F(m_j)
};

double dlmc_eig(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, const Design& design,
                Index n_outer, Index n_inner, std::uint64_t seed);

// Laplace posterior pointwise variance for a design, linearized at lin.point():
// diag(Gamma_pr) - sum_j lambda_j / (1 + lambda_j) (S v_j)^2 with S S^T = Gamma_pr
// and (lambda_j, v_j) from randomized_eigs over S^T J^T W^T Gamma_n^-1 W J S.
// rank defaults to the design size.
Vector posterior_pointwise_variance(const PriorOperator& prior, const LinearizedModel& lin, const NoiseModel& noise,
                                    const Design& design, std::optional<Index> rank = std::nullopt,
                                    std::uint64_t seed = 0);

// Same with a precomputed diag(Gamma_pr), for evaluating several designs.
Vector posterior_pointwise_variance(const PriorOperator& prior, const Vector& prior_variance,
                                    const LinearizedModel& lin, const NoiseModel& noise, const Design& design,
                                    std::optional<Index> rank = std::nullopt, std::uint64_t seed = 0);

}  // namespace oed
