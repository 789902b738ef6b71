#include "oed/lognormal_diffusion.hpp"

#include <cmath>

#include "oed/errors.hpp"

namespace oed {

namespace {

Vector checked_exp(const Vector& m) {
  Vector kappa = m.array().exp().matrix();
  if (!kappa.allFinite() || kappa.minCoeff() <= 0.0) {
    throw NumericalError("exp(m) overflow/underflow: diffusion coefficient is not representable");
  }
  return kappa;
}

SparseMatrix extract(const SparseMatrix& a, const std::vector<Index>& rows, const std::vector<Index>& row_of,
                     const std::vector<Index>& cols, const std::vector<Index>& col_of) {
  std::vector<Triplet> trip;
  for (Index k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      const Index r = row_of[static_cast<std::size_t>(it.row())];
      const Index c = col_of[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  }
  SparseMatrix out(Index(rows.size()), Index(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

}  // namespace

// du_F = -K_FF^-1 C(u) dm, where C(v) is the free-row block of d(K(m) v)/dm.
class LogNormalDiffusionModel::Jacobian final : public Linearization {
 public:
  Jacobian(const LogNormalDiffusionModel& model, Vector point, Solve solve, std::shared_ptr<SolveCounter> counter)
      : Linearization(std::move(point)),
        model_(model),
        solve_(std::move(solve)),
        counter_(std::move(counter)),
        kappa_(checked_exp(this->point())) {
    b_free_ = extract_free_columns(model_.sensors_.interpolation());
  }

  Vector jacobian_action(const Vector& dm) const override {
    const Vector du = solve_.free_block.solve(apply_c(solve_.u, dm));
    ++counter_->incremental;
    return -(b_free_ * du);
  }

  Vector jacobian_transpose_action(const Vector& z) const override {
    if (z.size() != model_.candidate_count()) throw ValidationError("data vector has wrong length");
    const Vector w = solve_.free_block.solve(b_free_.transpose() * z);
    ++counter_->incremental;
    return -apply_ct(solve_.u, w);
  }

  // Second-order adjoint: with p the adjoint of z, u_hat the incremental state
  // and p_hat the incremental adjoint,
  // H dm = (C(u)^T p) .* dm + C(u_hat)^T p + C(u)^T p_hat.
  Vector second_order_action(const Vector& z, const Vector& dm) const override {
    if (z.size() != model_.candidate_count()) throw ValidationError("data vector has wrong length");
    const Vector p = -solve_.free_block.solve(b_free_.transpose() * z);
    const Vector u_hat = -solve_.free_block.solve(apply_c(solve_.u, dm));
    const Vector p_hat = -solve_.free_block.solve(apply_c(extend(p), dm));
    counter_->incremental += 3;
    return apply_ct(solve_.u, p).cwiseProduct(dm) + apply_ct(extend(u_hat), p) + apply_ct(solve_.u, p_hat);
  }
  bool has_second_order() const override { return true; }

 private:
  SparseMatrix extract_free_columns(const SparseMatrix& b) const {
    std::vector<Index> rows(static_cast<std::size_t>(b.rows()));
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = Index(r);
    return extract(b, rows, rows, model_.free_, model_.free_of_);
  }

  // Free-length vector to nodal, zero on Dirichlet nodes.
  Vector extend(const Vector& free) const {
    Vector out = Vector::Zero(model_.grid_.vertex_count());
    for (std::size_t f = 0; f < model_.free_.size(); ++f) out[model_.free_[f]] = free[Index(f)];
    return out;
  }

  // C(v) dm
  Vector apply_c(const Vector& v, const Vector& dm) const {
    Vector out = Vector::Zero(Index(model_.free_.size()));
    for (const auto& tri : model_.grid_.elements()) {
      const ElementGeometry g = element_geometry(model_.grid_, tri);
      Eigen::Vector2d grad_v = Eigen::Vector2d::Zero();
      for (int b = 0; b < 3; ++b) grad_v += v[tri[b]] * g.grad[b];
      double weight = 0.0;
      for (int i = 0; i < 3; ++i) weight += kappa_[tri[i]] * dm[tri[i]];
      for (int a = 0; a < 3; ++a) {
        const Index row = model_.free_of_[static_cast<std::size_t>(tri[a])];
        if (row >= 0) out[row] += g.area * g.grad[a].dot(grad_v) / 3.0 * weight;
      }
    }
    return out;
  }

  // C(v)^T x
  Vector apply_ct(const Vector& v, const Vector& x) const {
    Vector out = Vector::Zero(model_.grid_.vertex_count());
    for (const auto& tri : model_.grid_.elements()) {
      const ElementGeometry g = element_geometry(model_.grid_, tri);
      Eigen::Vector2d grad_v = Eigen::Vector2d::Zero();
      for (int b = 0; b < 3; ++b) grad_v += v[tri[b]] * g.grad[b];
      double coef = 0.0;
      for (int a = 0; a < 3; ++a) {
        const Index row = model_.free_of_[static_cast<std::size_t>(tri[a])];
        if (row >= 0) coef += g.area * g.grad[a].dot(grad_v) / 3.0 * x[row];
      }
      for (int i = 0; i < 3; ++i) out[tri[i]] += coef * kappa_[tri[i]];
    }
    return out;
  }

  const LogNormalDiffusionModel& model_;
  Solve solve_;
  std::shared_ptr<SolveCounter> counter_;
  Vector kappa_;
  SparseMatrix b_free_;
};

LogNormalDiffusionModel::LogNormalDiffusionModel(Grid2D grid, const std::vector<Point>& sensors)
    : grid_(std::move(grid)), sensors_(grid_, sensors) {
  const Index n = grid_.vertex_count();
  free_of_.assign(static_cast<std::size_t>(n), -1);
  lift_ = Vector::Zero(n);
  for (Index v = 0; v < n; ++v) {
    const Index j = v / (grid_.nx() + 1);
    if (j == 0) {
      lift_[v] = 0.0;
    } else if (j == grid_.ny()) {
      lift_[v] = 1.0;
    } else {
      free_of_[static_cast<std::size_t>(v)] = Index(free_.size());
      free_.push_back(v);
    }
  }
}

SparseMatrix LogNormalDiffusionModel::stiffness(const Vector& m) const {
  check_parameter(m);
  const Vector kappa = checked_exp(m);
  std::vector<Triplet> trip;
  trip.reserve(grid_.elements().size() * 9);
  for (const auto& tri : grid_.elements()) {
    const ElementGeometry g = element_geometry(grid_, tri);
    const double weight = g.area * (kappa[tri[0]] + kappa[tri[1]] + kappa[tri[2]]) / 3.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(tri[a], tri[b], weight * g.grad[a].dot(g.grad[b]));
  }
  SparseMatrix k(grid_.vertex_count(), grid_.vertex_count());
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

LogNormalDiffusionModel::Solve LogNormalDiffusionModel::solve(const Vector& m) const {
  const SparseMatrix k = stiffness(m);
  const SparseMatrix k_ff = extract(k, free_, free_of_, free_, free_of_);
  // rhs = -(K lift)_F
  const Vector k_lift = k * lift_;
  Vector rhs(Index(free_.size()));
  for (std::size_t f = 0; f < free_.size(); ++f) rhs[Index(f)] = -k_lift[free_[f]];
  Solve s{lift_, SpdSolver(k_ff)};
  const Vector u_free = s.free_block.solve(rhs);
  for (std::size_t f = 0; f < free_.size(); ++f) s.u[free_[f]] = u_free[Index(f)];
  ++counter_->forward;
  return s;
}

State LogNormalDiffusionModel::solve_forward(const Vector& m) const { return State{{solve(m).u}}; }

Vector LogNormalDiffusionModel::observe(const State& u) const {
  if (u.snapshots.size() != 1 || u.snapshots[0].size() != grid_.vertex_count()) {
    throw ValidationError("state is not a steady solution on this grid");
  }
  return sensors_.interpolation() * u.snapshots[0];
}

LinearizedModel LogNormalDiffusionModel::linearize(const Vector& m) const {
  check_parameter(m);
  return LinearizedModel(std::make_shared<Jacobian>(*this, m, solve(m), counter_));
}

}  // namespace oed
