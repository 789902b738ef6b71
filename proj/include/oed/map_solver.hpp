#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oed/forward_model.hpp"
#include "oed/prior.hpp"

namespace oed {

struct NewtonSettings {
  int max_newton = 50;
  double grad_rtol = 1e-8;
  int cg_max = 200;
  double armijo_c = 1e-4;
  int max_backtracks = 20;
  // Newton steps taken with the Gauss-Newton Hessian before nonlinear models
  // with second derivatives switch to the full Hessian.
  int gauss_newton_iters = 5;

  // Throws ValidationError unless all positive and armijo_c in (0, 1).
  void validate() const;
};

struct NewtonStep {
  int iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  int cg_iters = 0;
  double step = 0.0;
};

struct MapResult {
  Vector m_map;
  bool converged = false;
  int newton_iters = 0;
  long long total_cg_iters = 0;  // equals the number of Hessian actions
  double objective = 0.0;
  double grad_norm = 0.0;
  double initial_grad_norm = 0.0;
  std::vector<NewtonStep> trace;
};

// 1/2 ||W F(m) - y||^2_{Gamma_n^-1} + 1/2 ||m - m_pr||^2_{Gamma_pr^-1}
double map_objective(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                     const Vector& m, const Vector& y, const Design& design);

// J^T W^T Gamma_n^-1 (W F(m) - y) + Gamma_pr^-1 (m - m_pr): one forward and one adjoint solve.
Vector misfit_gradient(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                       const Vector& m, const Vector& y, const Design& design);
// Same, reusing a linearization at m and the observation F_all(m).
Vector misfit_gradient(const LinearizedModel& lin, const Vector& f_all, const PriorOperator& prior,
                       const NoiseModel& noise, const Vector& y, const Design& design);

// J^T W^T Gamma_n^-1 W J dm + A M^-1 A dm.
Vector gn_hessian_action(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise,
                         const Design& design, const Vector& dm);

// Inexact Newton-CG with prior-preconditioned CG, forcing term
// min(0.5, sqrt(|g| / |g0|)) and Armijo backtracking. The Hessian is
// Gauss-Newton for the first gauss_newton_iters steps, then full where the
// model provides second derivatives; a full-Hessian direction that is not a
// descent direction is replaced by the Gauss-Newton one.
// Non-convergence is reported through MapResult::converged.
MapResult find_map(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, const Vector& y,
                   const Design& design, const NewtonSettings& settings = {},
                   const std::optional<Vector>& m0 = std::nullopt);

// iter,objective,grad_norm,cg_iters,step
void write_newton_trace_csv(const std::string& path, const MapResult& result);

}  // namespace oed
