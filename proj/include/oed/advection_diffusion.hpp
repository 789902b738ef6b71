#pragma once

#include <string>
#include <vector>

#include "oed/forward_model.hpp"
#include "oed/solvers.hpp"

namespace oed {

// Element-wise constant velocity field.
class VelocityField {
 public:
  // Recirculating cell flow, the curl of psi = -sin(pi x) sin(pi y) / pi
  // interpolated in P1. Exactly divergence-free element by element, with zero
  // normal flux across the boundary; unit maximum speed in the continuum.
  static VelocityField analytic(const Grid2D& grid);
  // Nodal velocities (one pair per vertex), averaged onto elements.
  static VelocityField from_nodal(const Grid2D& grid, const Vector& vx, const Vector& vy);
  // CSV rows of vertex,vx,vy.
  static VelocityField from_csv(const Grid2D& grid, const std::string& path);

  const std::vector<Eigen::Vector2d>& element_values() const noexcept { return values_; }

  // max_j |sum_T int_T v . grad(phi_j)|: discrete divergence with natural
  // boundary flux included.
  double discrete_divergence(const Grid2D& grid) const;

 private:
  std::vector<Eigen::Vector2d> values_;
};

struct AdvectionDiffusionSettings {
  double diffusion = 0.001;
  int time_steps = 40;
  double final_time = 4.0;
  // Time indices (1..time_steps, or 0 for the initial state) at which all
  // sensors record; data rows are ordered time-major.
  std::vector<int> observation_steps{40};
};

// u_t - k Lap u + v . grad u = 0, zero-flux boundary, u(0) = m; implicit Euler
// in time, P1 Galerkin in space. The parameter is the initial condition.
class AdvectionDiffusionModel final : public ForwardModel {
 public:
  AdvectionDiffusionModel(Grid2D grid, VelocityField velocity, const std::vector<Point>& sensors,
                          AdvectionDiffusionSettings settings = {});

  Index parameter_dim() const override { return grid_.vertex_count(); }
  Index candidate_count() const override { return sensors_.size() * Index(settings_.observation_steps.size()); }
  bool is_linear() const override { return true; }

  State solve_forward(const Vector& m) const override;
  Vector observe(const State& u) const override;
  using ForwardModel::observe;
  // The returned handle refers to this model and must not outlive it.
  LinearizedModel linearize(const Vector& m) const override;

  const Grid2D& grid() const noexcept { return grid_; }
  const SensorArray& sensors() const noexcept { return sensors_; }
  const AdvectionDiffusionSettings& settings() const noexcept { return settings_; }
  const SparseMatrix& mass() const noexcept { return mass_; }
  // M + dt (k K + C), factorized once.
  const LuSolver& step_operator() const noexcept { return step_; }

 private:
  class Jacobian;
  State propagate(const Vector& m) const;

  Grid2D grid_;
  VelocityField velocity_;
  SensorArray sensors_;
  AdvectionDiffusionSettings settings_;
  SparseMatrix mass_;
  SparseMatrix system_;
  LuSolver step_;
};

// Initial condition min(0.5, exp(-100 |x - (0.35, 0.7)|^2)).
Vector gaussian_blob_initial_condition(const Grid2D& grid);

}  // namespace oed
