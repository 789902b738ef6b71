#include "oed/forward_model.hpp"

#include <cmath>
#include <fstream>

#include "oed/csv.hpp"
#include "oed/errors.hpp"

namespace oed {

SensorArray::SensorArray(const Grid2D& grid, std::vector<Point> locations) : locations_(std::move(locations)) {
  std::vector<Triplet> trip;
  trip.reserve(locations_.size() * 3);
  for (std::size_t s = 0; s < locations_.size(); ++s) {
    for (std::size_t t = 0; t < s; ++t) {
      if (locations_[s].x == locations_[t].x && locations_[s].y == locations_[t].y) {
        throw ValidationError("duplicate sensor location at candidates " + std::to_string(t) + " and " +
                              std::to_string(s));
      }
    }
    const PointLocation loc = grid.locate(locations_[s]);
    for (int a = 0; a < 3; ++a) {
      if (loc.weights[a] != 0.0) trip.emplace_back(Index(s), loc.vertices[a], loc.weights[a]);
    }
  }
  b_.resize(Index(locations_.size()), grid.vertex_count());
  b_.setFromTriplets(trip.begin(), trip.end());
  b_.makeCompressed();
}

std::vector<Point> SensorArray::lattice(int gx, int gy, double x0, double x1, double y0, double y1) {
  if (gx <= 0 || gy <= 0) throw ValidationError("lattice dimensions must be positive");
  std::vector<Point> pts;
  for (int j = 0; j < gy; ++j) {
    const double y = gy == 1 ? 0.5 * (y0 + y1) : y0 + (y1 - y0) * j / (gy - 1);
    for (int i = 0; i < gx; ++i) {
      const double x = gx == 1 ? 0.5 * (x0 + x1) : x0 + (x1 - x0) * i / (gx - 1);
      pts.push_back({x, y});
    }
  }
  return pts;
}

NoiseModel::NoiseModel(Vector sigma) : sigma_(std::move(sigma)) {
  for (Index j = 0; j < sigma_.size(); ++j) {
    if (!(sigma_[j] > 0.0) || !std::isfinite(sigma_[j])) {
      throw ValidationError("noise standard deviation " + std::to_string(j) + " must be positive");
    }
  }
}

Vector NoiseModel::whiten(const Vector& z) const {
  if (z.size() != size()) throw ValidationError("data vector length does not match noise model");
  return z.cwiseQuotient(sigma_);
}

Vector NoiseModel::apply_inverse(const Vector& z, const Design& design) const {
  if (design.candidates() != size()) throw ValidationError("design does not match noise model");
  if (z.size() != design.size()) throw ValidationError("data vector length does not match design");
  Vector out(z.size());
  for (Index t = 0; t < z.size(); ++t) {
    const double s = sigma_[design[t]];
    out[t] = z[t] / (s * s);
  }
  return out;
}

void write_state_csv(const std::string& path, const Grid2D& grid, const State& state) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "vertex,x,y,value,time_index\n";
  for (std::size_t t = 0; t < state.snapshots.size(); ++t) {
    const Vector& u = state.snapshots[t];
    for (Index v = 0; v < u.size(); ++v) {
      const Point p = grid.vertex(v);
      out << v << ',' << csv::format(p.x) << ',' << csv::format(p.y) << ',' << csv::format(u[v]) << ',' << t
          << '\n';
    }
  }
}

const Linearization& LinearizedModel::get() const {
  if (!impl_) throw StateError("model has not been linearized at a point");
  return *impl_;
}

const Vector& LinearizedModel::point() const { return get().point(); }

Vector LinearizedModel::jacobian_action(const Vector& dm) const {
  const Linearization& lin = get();
  if (dm.size() != lin.point().size()) throw ValidationError("parameter direction has wrong length");
  return lin.jacobian_action(dm);
}

Vector LinearizedModel::jacobian_transpose_action(const Vector& z) const { return get().jacobian_transpose_action(z); }

Vector LinearizedModel::second_order_action(const Vector& z, const Vector& dm) const {
  const Linearization& lin = get();
  if (dm.size() != lin.point().size()) throw ValidationError("parameter direction has wrong length");
  return lin.second_order_action(z, dm);
}

Vector Linearization::second_order_action(const Vector&, const Vector&) const {
  throw CapabilityError("model does not provide second derivatives");
}

Vector ForwardModel::observe(const State& u, const Design& design) const {
  if (design.candidates() != candidate_count()) throw ValidationError("design does not match model candidates");
  return design.select(observe(u));
}

void ForwardModel::check_parameter(const Vector& m) const {
  if (m.size() != parameter_dim()) {
    throw ValidationError("parameter has length " + std::to_string(m.size()) + ", expected " +
                          std::to_string(parameter_dim()));
  }
  if (!m.allFinite()) throw ValidationError("parameter contains non-finite values");
}

}  // namespace oed
