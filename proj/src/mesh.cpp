#include "oed/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "oed/csv.hpp"
#include "oed/errors.hpp"

namespace oed {

Grid2D::Grid2D(int nx, int ny) : nx_(nx), ny_(ny) {
  if (nx <= 0 || ny <= 0) throw ValidationError("grid cell counts must be positive");
  elements_.reserve(static_cast<std::size_t>(element_count()));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Index v00 = vertex_index(i, j);
      const Index v10 = vertex_index(i + 1, j);
      const Index v11 = vertex_index(i + 1, j + 1);
      const Index v01 = vertex_index(i, j + 1);
      elements_.push_back({v00, v10, v11});
      elements_.push_back({v00, v11, v01});
    }
  }
  for (int i = 0; i < nx; ++i) boundary_edges_.push_back({vertex_index(i, 0), vertex_index(i + 1, 0)});
  for (int j = 0; j < ny; ++j) boundary_edges_.push_back({vertex_index(nx, j), vertex_index(nx, j + 1)});
  for (int i = nx; i > 0; --i) boundary_edges_.push_back({vertex_index(i, ny), vertex_index(i - 1, ny)});
  for (int j = ny; j > 0; --j) boundary_edges_.push_back({vertex_index(0, j), vertex_index(0, j - 1)});
}

Point Grid2D::vertex(Index v) const noexcept {
  const Index i = v % (nx_ + 1);
  const Index j = v / (nx_ + 1);
  return {double(i) / nx_, double(j) / ny_};
}

bool Grid2D::on_boundary(Index v) const noexcept {
  const Index i = v % (nx_ + 1);
  const Index j = v / (nx_ + 1);
  return i == 0 || j == 0 || i == nx_ || j == ny_;
}

PointLocation Grid2D::locate(Point p) const {
  if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
    throw ValidationError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                          ") lies outside the unit square");
  }
  const double sx = p.x * nx_;
  const double sy = p.y * ny_;
  const int i = std::min(static_cast<int>(std::floor(sx)), nx_ - 1);
  const int j = std::min(static_cast<int>(std::floor(sy)), ny_ - 1);
  const double s = sx - i;
  const double t = sy - j;
  PointLocation loc;
  if (s >= t) {
    loc.vertices = {vertex_index(i, j), vertex_index(i + 1, j), vertex_index(i + 1, j + 1)};
    loc.weights = {1.0 - s, s - t, t};
  } else {
    loc.vertices = {vertex_index(i, j), vertex_index(i + 1, j + 1), vertex_index(i, j + 1)};
    loc.weights = {1.0 - t, s, t - s};
  }
  return loc;
}

ElementGeometry element_geometry(const Grid2D& grid, const std::array<Index, 3>& tri) {
  const Point p0 = grid.vertex(tri[0]);
  const Point p1 = grid.vertex(tri[1]);
  const Point p2 = grid.vertex(tri[2]);
  const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
  ElementGeometry g;
  g.area = 0.5 * std::abs(det);
  const std::array<Point, 3> p{p0, p1, p2};
  for (int a = 0; a < 3; ++a) {
    const Point& pb = p[(a + 1) % 3];
    const Point& pc = p[(a + 2) % 3];
    g.grad[a] = Eigen::Vector2d(pb.y - pc.y, pc.x - pb.x) / det;
  }
  return g;
}

SparseMatrix assemble_mass(const Grid2D& grid) {
  std::vector<Triplet> trip;
  trip.reserve(grid.elements().size() * 9);
  for (const auto& tri : grid.elements()) {
    const double area = element_geometry(grid, tri).area;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(tri[a], tri[b], area / 12.0 * (a == b ? 2.0 : 1.0));
  }
  SparseMatrix m(grid.vertex_count(), grid.vertex_count());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Vector lumped_mass(const Grid2D& grid) {
  Vector d = Vector::Zero(grid.vertex_count());
  for (const auto& tri : grid.elements()) {
    const double area = element_geometry(grid, tri).area;
    for (Index v : tri) d[v] += area / 3.0;
  }
  return d;
}

SparseMatrix assemble_stiffness(const Grid2D& grid, const Eigen::Matrix2d& theta) {
  std::vector<Triplet> trip;
  trip.reserve(grid.elements().size() * 9);
  for (const auto& tri : grid.elements()) {
    const ElementGeometry g = element_geometry(grid, tri);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(tri[a], tri[b], g.area * g.grad[a].dot(theta * g.grad[b]));
  }
  SparseMatrix k(grid.vertex_count(), grid.vertex_count());
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

SparseMatrix assemble_boundary_mass(const Grid2D& grid) {
  std::vector<Triplet> trip;
  for (const auto& e : grid.boundary_edges()) {
    const Point a = grid.vertex(e[0]);
    const Point b = grid.vertex(e[1]);
    const double h = std::hypot(b.x - a.x, b.y - a.y);
    trip.emplace_back(e[0], e[0], h / 3.0);
    trip.emplace_back(e[1], e[1], h / 3.0);
    trip.emplace_back(e[0], e[1], h / 6.0);
    trip.emplace_back(e[1], e[0], h / 6.0);
  }
  SparseMatrix m(grid.vertex_count(), grid.vertex_count());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

void write_field_csv(std::ostream& os, const Grid2D& grid, const Vector& values) {
  if (values.size() != grid.vertex_count()) throw ValidationError("field length does not match grid");
  os << "vertex,x,y,value\n";
  for (Index v = 0; v < grid.vertex_count(); ++v) {
    const Point p = grid.vertex(v);
    os << v << ',' << csv::format(p.x) << ',' << csv::format(p.y) << ',' << csv::format(values[v]) << '\n';
  }
}

void write_field_csv(const std::string& path, const Grid2D& grid, const Vector& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_field_csv(out, grid, values);
}

Vector read_field_csv(const std::string& path, const Grid2D& grid) {
  const auto rows = csv::read_numeric(path);
  if (Index(rows.size()) != grid.vertex_count()) {
    throw IoError(path + ": expected " + std::to_string(grid.vertex_count()) + " vertices, found " +
                  std::to_string(rows.size()));
  }
  Vector out(grid.vertex_count());
  for (const auto& row : rows) {
    if (row.size() != 4) throw IoError(path + ": expected 4 columns (vertex,x,y,value)");
    const auto v = static_cast<Index>(row[0]);
    if (v < 0 || v >= grid.vertex_count()) throw IoError(path + ": vertex index out of range");
    out[v] = row[3];
  }
  return out;
}

}  // namespace oed
