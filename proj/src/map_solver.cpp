#include "oed/map_solver.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>

#include "oed/csv.hpp"
#include "oed/errors.hpp"

namespace oed {

void NewtonSettings::validate() const {
  if (max_newton <= 0 || cg_max <= 0 || max_backtracks <= 0) {
    throw ValidationError("Newton iteration limits must be positive");
  }
  if (!(grad_rtol > 0.0)) throw ValidationError("grad_rtol must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ValidationError("armijo_c must lie in (0, 1)");
  if (gauss_newton_iters < 0) throw ValidationError("gauss_newton_iters must be non-negative");
}

namespace {

void check_inputs(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, const Vector& y,
                  const Design& design) {
  if (prior.dim() != model.parameter_dim()) throw ValidationError("prior and model disagree on parameter dimension");
  if (noise.size() != model.candidate_count()) throw ValidationError("noise model does not match candidate count");
  if (design.candidates() != model.candidate_count()) throw ValidationError("design does not match candidate count");
  if (y.size() != design.size()) {
    throw ValidationError("data has length " + std::to_string(y.size()) + ", design has " +
                          std::to_string(design.size()) + " sensors");
  }
}

double objective_from(const PriorOperator& prior, const NoiseModel& noise, const Vector& m, const Vector& f_all,
                      const Vector& y, const Design& design) {
  const Vector res = design.select(f_all) - y;
  const double misfit = 0.5 * res.dot(noise.apply_inverse(res, design));
  return misfit + 0.5 * prior.norm_sq(m - prior.mean());
}

struct Evaluation {
  double objective = 0.0;
  Vector gradient;
  LinearizedModel lin;
  Vector weighted_residual;  // W^T Gamma_n^-1 (W F(m) - y)
};

Evaluation evaluate(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, const Vector& m,
                    const Vector& y, const Design& design) {
  Evaluation e;
  const Vector f = model.forward_map(m);
  e.objective = objective_from(prior, noise, m, f, y, design);
  e.lin = model.linearize(m);
  e.weighted_residual = design.scatter(noise.apply_inverse(design.select(f) - y, design));
  e.gradient = misfit_gradient(e.lin, f, prior, noise, y, design);
  if (!std::isfinite(e.objective) || !e.gradient.allFinite()) throw NumericalError("non-finite MAP objective");
  return e;
}

struct CgResult {
  Vector x;
  int iters = 0;
};

using HessianAction = std::function<Vector(const Vector&)>;

// Preconditioned CG on H p = b with Gamma_pr as preconditioner. Stops when the
// residual norm drops to tol, at cg_max or on non-positive curvature.
CgResult prior_pcg(const HessianAction& hessian, const PriorOperator& prior, const Vector& b, double tol,
                   int cg_max) {
  CgResult out{Vector::Zero(b.size()), 0};
  Vector r = b;
  Vector z = prior.apply_covariance(r);
  Vector p = z;
  double rz = r.dot(z);
  while (out.iters < cg_max && r.norm() > tol) {
    const Vector hp = hessian(p);
    ++out.iters;
    const double curv = p.dot(hp);
    if (!(curv > 0.0)) break;
    const double alpha = rz / curv;
    out.x += alpha * p;
    r -= alpha * hp;
    z = prior.apply_covariance(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return out;
}

}  // namespace

double map_objective(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                     const Vector& m, const Vector& y, const Design& design) {
  check_inputs(model, prior, noise, y, design);
  return objective_from(prior, noise, m, model.forward_map(m), y, design);
}

Vector misfit_gradient(const LinearizedModel& lin, const Vector& f_all, const PriorOperator& prior,
                       const NoiseModel& noise, const Vector& y, const Design& design) {
  if (f_all.size() != design.candidates()) throw ValidationError("observation does not match design");
  if (y.size() != design.size()) throw ValidationError("data length does not match design");
  const Vector res = design.select(f_all) - y;
  const Vector adj = lin.jacobian_transpose_action(design.scatter(noise.apply_inverse(res, design)));
  return adj + prior.apply_precision(lin.point() - prior.mean());
}

Vector misfit_gradient(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                       const Vector& m, const Vector& y, const Design& design) {
  check_inputs(model, prior, noise, y, design);
  return misfit_gradient(model.linearize(m), model.forward_map(m), prior, noise, y, design);
}

Vector gn_hessian_action(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise,
                         const Design& design, const Vector& dm) {
  const Vector jd = design.select(lin.jacobian_action(dm));
  const Vector misfit = lin.jacobian_transpose_action(design.scatter(noise.apply_inverse(jd, design)));
  return misfit + prior.apply_precision(dm);
}

MapResult find_map(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, const Vector& y,
                   const Design& design, const NewtonSettings& settings, const std::optional<Vector>& m0) {
  settings.validate();
  check_inputs(model, prior, noise, y, design);
  MapResult result;
  Vector m = m0.value_or(prior.mean());
  if (m.size() != prior.dim()) throw ValidationError("initial guess has wrong length");

  Evaluation cur = evaluate(model, prior, noise, m, y, design);
  const double g0 = cur.gradient.norm();
  result.initial_grad_norm = g0;
  result.trace.push_back({0, cur.objective, g0, 0, 0.0});

  double gnorm = g0;
  bool converged = g0 == 0.0;
  while (!converged && result.newton_iters < settings.max_newton) {
    const double eta = std::min(0.5, std::sqrt(gnorm / g0));
    const HessianAction gauss_newton = [&](const Vector& dm) {
      return gn_hessian_action(cur.lin, prior, noise, design, dm);
    };
    const HessianAction full = [&](const Vector& dm) {
      return Vector(gauss_newton(dm) + cur.lin.second_order_action(cur.weighted_residual, dm));
    };
    const bool use_full =
        !model.is_linear() && cur.lin.has_second_order() && result.newton_iters >= settings.gauss_newton_iters;
    CgResult cg = prior_pcg(use_full ? full : gauss_newton, prior, -cur.gradient, eta * gnorm, settings.cg_max);
    result.total_cg_iters += cg.iters;
    double slope = cur.gradient.dot(cg.x);
    if (use_full && !(slope < 0.0)) {
      const int spent = cg.iters;
      cg = prior_pcg(gauss_newton, prior, -cur.gradient, eta * gnorm, settings.cg_max);
      result.total_cg_iters += cg.iters;
      cg.iters += spent;
      slope = cur.gradient.dot(cg.x);
    }
    const Vector& dir = cg.x;
    if (!(slope < 0.0)) break;

    double alpha = 1.0;
    bool accepted = false;
    Vector trial;
    double trial_obj = 0.0;
    for (int bt = 0; bt <= settings.max_backtracks; ++bt) {
      trial = m + alpha * dir;
      try {
        trial_obj = objective_from(prior, noise, trial, model.forward_map(trial), y, design);
      } catch (const NumericalError&) {
        trial_obj = std::numeric_limits<double>::infinity();
      }
      if (trial_obj <= cur.objective + settings.armijo_c * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++result.newton_iters;
    if (!accepted) {
      result.trace.push_back({result.newton_iters, cur.objective, gnorm, cg.iters, 0.0});
      break;
    }
    m = trial;
    cur = evaluate(model, prior, noise, m, y, design);
    gnorm = cur.gradient.norm();
    result.trace.push_back({result.newton_iters, cur.objective, gnorm, cg.iters, alpha});
    converged = gnorm <= settings.grad_rtol * g0;
  }

  result.m_map = m;
  result.converged = converged;
  result.objective = cur.objective;
  result.grad_norm = gnorm;
  return result;
}

void write_newton_trace_csv(const std::string& path, const MapResult& result) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << "iter,objective,grad_norm,cg_iters,step\n";
  for (const NewtonStep& s : result.trace) {
    os << s.iter << ',' << csv::format(s.objective) << ',' << csv::format(s.grad_norm) << ',' << s.cg_iters << ','
       << csv::format(s.step) << '\n';
  }
}

}  // namespace oed
