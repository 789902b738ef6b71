#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "oed/design.hpp"
#include "oed/mesh.hpp"

namespace oed {

// Candidate sensor locations and their P1 interpolation operator B_d (d x n_u).
class SensorArray {
 public:
  SensorArray(const Grid2D& grid, std::vector<Point> locations);

  // gx x gy lattice spanning [x0, x1] x [y0, y1] (row-major, x fastest).
  static std::vector<Point> lattice(int gx, int gy, double x0, double x1, double y0, double y1);

  Index size() const noexcept { return Index(locations_.size()); }
  const std::vector<Point>& locations() const noexcept { return locations_; }
  const SparseMatrix& interpolation() const noexcept { return b_; }

 private:
  std::vector<Point> locations_;
  SparseMatrix b_;
};

// Uncorrelated Gaussian observation noise, one standard deviation per candidate.
class NoiseModel {
 public:
  NoiseModel() = default;
  explicit NoiseModel(Vector sigma);
  static NoiseModel uniform(Index d, double sigma) { return NoiseModel(Vector::Constant(d, sigma)); }

  Index size() const noexcept { return sigma_.size(); }
  const Vector& sigma() const noexcept { return sigma_; }
  // (Gamma_n^d)^{-1/2} z
  Vector whiten(const Vector& z) const;
  // Gamma_n^{-1} restricted to a design, applied to a design-length vector.
  Vector apply_inverse(const Vector& z, const Design& design) const;

 private:
  Vector sigma_;
};

// Discrete state: one snapshot for steady models, N_t + 1 snapshots (initial
// condition included) for time-dependent ones.
struct State {
  std::vector<Vector> snapshots;
};

// Snapshot export: vertex,x,y,value,time_index.
void write_state_csv(const std::string& path, const Grid2D& grid, const State& state);

// Counts every PDE solve a model performs, including those of its linearizations.
struct SolveCounter {
  std::atomic<long long> forward{0};
  std::atomic<long long> incremental{0};
  long long total() const noexcept { return forward.load() + incremental.load(); }
};

// Jacobian of the parameter-to-observable map at a fixed point, with all
// factorizations cached. Read-only after construction.
class Linearization {
 public:
  virtual ~Linearization() = default;
  const Vector& point() const noexcept { return point_; }
  // J_d dm over all d candidates.
  virtual Vector jacobian_action(const Vector& dm) const = 0;
  // J_d^T z for a full-length data vector z.
  virtual Vector jacobian_transpose_action(const Vector& z) const = 0;
  // (sum_i z_i Hess F_i(m)) dm for a full-length z. Zero for linear maps;
  // models without second derivatives throw CapabilityError.
  virtual Vector second_order_action(const Vector& z, const Vector& dm) const;
  virtual bool has_second_order() const { return false; }

 protected:
  explicit Linearization(Vector point) : point_(std::move(point)) {}

 private:
  Vector point_;
};

// Value handle on a Linearization. A default-constructed handle is "not
// linearized" and every action on it throws StateError.
class LinearizedModel {
 public:
  LinearizedModel() = default;
  explicit LinearizedModel(std::shared_ptr<const Linearization> impl) : impl_(std::move(impl)) {}

  bool valid() const noexcept { return static_cast<bool>(impl_); }
  const Vector& point() const;
  Vector jacobian_action(const Vector& dm) const;
  Vector jacobian_transpose_action(const Vector& z) const;
  Vector second_order_action(const Vector& z, const Vector& dm) const;
  bool has_second_order() const { return valid() && impl_->has_second_order(); }

 private:
  const Linearization& get() const;
  std::shared_ptr<const Linearization> impl_;
};

class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Index parameter_dim() const = 0;
  // Data-space dimension d (all candidate observations).
  virtual Index candidate_count() const = 0;
  virtual bool is_linear() const = 0;

  virtual State solve_forward(const Vector& m) const = 0;
  // B_d u over all candidates.
  virtual Vector observe(const State& u) const = 0;
  Vector observe(const State& u, const Design& design) const;

  // F_all(m)
  Vector forward_map(const Vector& m) const { return observe(solve_forward(m)); }

  virtual LinearizedModel linearize(const Vector& m) const = 0;

  const SolveCounter& solves() const noexcept { return *counter_; }

 protected:
  void check_parameter(const Vector& m) const;
  std::shared_ptr<SolveCounter> counter_ = std::make_shared<SolveCounter>();
};

}  // namespace oed
