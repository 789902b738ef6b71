#include "oed/advection_diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oed/csv.hpp"
#include "oed/errors.hpp"

namespace oed {

VelocityField VelocityField::analytic(const Grid2D& grid) {
  const double pi = std::numbers::pi;
  const Vector psi = grid.interpolate([pi](double x, double y) { return -std::sin(pi * x) * std::sin(pi * y) / pi; });
  VelocityField f;
  f.values_.reserve(grid.elements().size());
  for (const auto& tri : grid.elements()) {
    const ElementGeometry g = element_geometry(grid, tri);
    Eigen::Vector2d grad_psi = Eigen::Vector2d::Zero();
    for (int a = 0; a < 3; ++a) grad_psi += psi[tri[a]] * g.grad[a];
    // v = (d psi/dy, -d psi/dx)
    f.values_.emplace_back(grad_psi.y(), -grad_psi.x());
  }
  return f;
}

VelocityField VelocityField::from_nodal(const Grid2D& grid, const Vector& vx, const Vector& vy) {
  if (vx.size() != grid.vertex_count() || vy.size() != grid.vertex_count()) {
    throw ValidationError("nodal velocity length does not match grid");
  }
  VelocityField f;
  for (const auto& tri : grid.elements()) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (Index a : tri) v += Eigen::Vector2d(vx[a], vy[a]);
    f.values_.push_back(v / 3.0);
  }
  return f;
}

VelocityField VelocityField::from_csv(const Grid2D& grid, const std::string& path) {
  const auto rows = csv::read_numeric(path);
  if (Index(rows.size()) != grid.vertex_count()) {
    throw IoError(path + ": expected one velocity row per vertex (" + std::to_string(grid.vertex_count()) + ")");
  }
  Vector vx(grid.vertex_count()), vy(grid.vertex_count());
  for (const auto& row : rows) {
    if (row.size() != 3) throw IoError(path + ": expected 3 columns (vertex,vx,vy)");
    const auto v = static_cast<Index>(row[0]);
    if (v < 0 || v >= grid.vertex_count()) throw IoError(path + ": vertex index out of range");
    vx[v] = row[1];
    vy[v] = row[2];
  }
  return from_nodal(grid, vx, vy);
}

double VelocityField::discrete_divergence(const Grid2D& grid) const {
  Vector div = Vector::Zero(grid.vertex_count());
  const auto& elems = grid.elements();
  for (std::size_t e = 0; e < elems.size(); ++e) {
    const ElementGeometry g = element_geometry(grid, elems[e]);
    for (int a = 0; a < 3; ++a) div[elems[e][a]] += g.area * values_[e].dot(g.grad[a]);
  }
  return div.cwiseAbs().maxCoeff();
}

namespace {

SparseMatrix assemble_advection(const Grid2D& grid, const VelocityField& velocity) {
  // C_ij = int (v . grad phi_j) phi_i; int_T phi_i = area / 3.
  std::vector<Triplet> trip;
  const auto& elems = grid.elements();
  for (std::size_t e = 0; e < elems.size(); ++e) {
    const ElementGeometry g = element_geometry(grid, elems[e]);
    const Eigen::Vector2d& v = velocity.element_values()[e];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(elems[e][a], elems[e][b], g.area / 3.0 * v.dot(g.grad[b]));
  }
  SparseMatrix c(grid.vertex_count(), grid.vertex_count());
  c.setFromTriplets(trip.begin(), trip.end());
  return c;
}

}  // namespace

// The map is linear, so one Jacobian serves every linearization point.
// F = B P^t with P = S^-1 M; J^T z = sum_t (M S^-T)^t B^T z_t.
class AdvectionDiffusionModel::Jacobian final : public Linearization {
 public:
  Jacobian(const AdvectionDiffusionModel& model, Vector point, std::shared_ptr<SolveCounter> counter)
      : Linearization(std::move(point)), model_(model), counter_(std::move(counter)) {}

  Vector jacobian_action(const Vector& dm) const override {
    counter_->incremental += model_.settings_.time_steps;
    return model_.observe(model_.propagate(dm));
  }

  Vector jacobian_transpose_action(const Vector& z) const override {
    if (z.size() != model_.candidate_count()) throw ValidationError("data vector has wrong length");
    const auto& steps = model_.settings_.observation_steps;
    const Index ns = model_.sensors_.size();
    const SparseMatrix bt = model_.sensors_.interpolation().transpose();
    auto inject = [&](int step, Vector& lambda) {
      for (std::size_t t = 0; t < steps.size(); ++t) {
        if (steps[t] == step) lambda += bt * z.segment(Index(t) * ns, ns);
      }
    };
    Vector lambda = Vector::Zero(model_.parameter_dim());
    for (int n = model_.settings_.time_steps; n >= 1; --n) {
      inject(n, lambda);
      lambda = model_.mass_ * model_.step_.solve_transpose(lambda);
    }
    inject(0, lambda);
    counter_->incremental += model_.settings_.time_steps;
    return lambda;
  }

  Vector second_order_action(const Vector&, const Vector& dm) const override { return Vector::Zero(dm.size()); }
  bool has_second_order() const override { return true; }

 private:
  const AdvectionDiffusionModel& model_;
  std::shared_ptr<SolveCounter> counter_;
};

AdvectionDiffusionModel::AdvectionDiffusionModel(Grid2D grid, VelocityField velocity,
                                                 const std::vector<Point>& sensors,
                                                 AdvectionDiffusionSettings settings)
    : grid_(std::move(grid)),
      velocity_(std::move(velocity)),
      sensors_(grid_, sensors),
      settings_(std::move(settings)) {
  if (!(settings_.diffusion > 0.0)) throw ValidationError("diffusion coefficient must be positive");
  if (settings_.time_steps <= 0 || !(settings_.final_time > 0.0)) {
    throw ValidationError("time stepping requires positive step count and final time");
  }
  if (settings_.observation_steps.empty()) throw ValidationError("at least one observation time is required");
  for (int s : settings_.observation_steps) {
    if (s < 0 || s > settings_.time_steps) throw ValidationError("observation step out of range");
  }
  if (Index(velocity_.element_values().size()) != grid_.element_count()) {
    throw ValidationError("velocity field does not match grid");
  }
  const double dt = settings_.final_time / settings_.time_steps;
  mass_ = assemble_mass(grid_);
  system_ = mass_ + dt * (settings_.diffusion * assemble_stiffness(grid_, Eigen::Matrix2d::Identity()) +
                          assemble_advection(grid_, velocity_));
  system_.makeCompressed();
  step_ = LuSolver(system_);
}

State AdvectionDiffusionModel::solve_forward(const Vector& m) const {
  check_parameter(m);
  State s = propagate(m);
  ++counter_->forward;
  return s;
}

State AdvectionDiffusionModel::propagate(const Vector& m) const {
  State s;
  s.snapshots.reserve(static_cast<std::size_t>(settings_.time_steps) + 1);
  s.snapshots.push_back(m);
  for (int n = 0; n < settings_.time_steps; ++n) s.snapshots.push_back(step_.solve(mass_ * s.snapshots.back()));
  return s;
}

Vector AdvectionDiffusionModel::observe(const State& u) const {
  if (u.snapshots.size() != static_cast<std::size_t>(settings_.time_steps) + 1) {
    throw ValidationError("state does not hold the full trajectory");
  }
  const Index ns = sensors_.size();
  Vector out(candidate_count());
  for (std::size_t t = 0; t < settings_.observation_steps.size(); ++t) {
    out.segment(Index(t) * ns, ns) =
        sensors_.interpolation() * u.snapshots[static_cast<std::size_t>(settings_.observation_steps[t])];
  }
  return out;
}

LinearizedModel AdvectionDiffusionModel::linearize(const Vector& m) const {
  check_parameter(m);
  return LinearizedModel(std::make_shared<Jacobian>(*this, m, counter_));
}

Vector gaussian_blob_initial_condition(const Grid2D& grid) {
  return grid.interpolate([](double x, double y) {
    const double r2 = (x - 0.35) * (x - 0.35) + (y - 0.7) * (y - 0.7);
    return std::min(0.5, std::exp(-100.0 * r2));
  });
}

}  // namespace oed
