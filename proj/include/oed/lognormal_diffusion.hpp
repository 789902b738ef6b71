#pragma once

#include <vector>

#include "oed/forward_model.hpp"
#include "oed/solvers.hpp"

namespace oed {

// -div(exp(m) grad u) = 0 on the unit square with u = 1 on the top edge,
// u = 0 on the bottom edge and zero flux on the left/right edges. P1 state and
// parameter on the same grid; exp(m) is interpolated nodally.
class LogNormalDiffusionModel final : public ForwardModel {
 public:
  LogNormalDiffusionModel(Grid2D grid, const std::vector<Point>& sensors);

  Index parameter_dim() const override { return grid_.vertex_count(); }
  Index candidate_count() const override { return sensors_.size(); }
  bool is_linear() const override { return false; }

  State solve_forward(const Vector& m) const override;
  Vector observe(const State& u) const override;
  using ForwardModel::observe;
  LinearizedModel linearize(const Vector& m) const override;

  const Grid2D& grid() const noexcept { return grid_; }
  const SensorArray& sensors() const noexcept { return sensors_; }
  const std::vector<Index>& free_dofs() const noexcept { return free_; }
  // Dirichlet lift: boundary values on Dirichlet nodes, zero elsewhere.
  const Vector& dirichlet_values() const noexcept { return lift_; }

  // exp(m)-weighted stiffness matrix over all nodes.
  SparseMatrix stiffness(const Vector& m) const;

 private:
  class Jacobian;
  struct Solve {
    Vector u;
    SpdSolver free_block;
  };
  Solve solve(const Vector& m) const;

  Grid2D grid_;
  SensorArray sensors_;
  std::vector<Index> free_;
  std::vector<Index> free_of_;  // node -> free index, or -1
  Vector lift_;
};

}  // namespace oed
