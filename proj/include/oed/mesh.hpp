#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "oed/types.hpp"

namespace oed {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Barycentric location of a point inside one triangle.
struct PointLocation {
  std::array<Index, 3> vertices{};
  std::array<double, 3> weights{};
};

// Uniform triangulation of the unit square. Cell (i, j) is split along the
// diagonal from (i, j) to (i+1, j+1); vertex (i, j) has index j*(nx+1) + i.
class Grid2D {
 public:
  Grid2D(int nx, int ny);

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  Index vertex_count() const noexcept { return Index(nx_ + 1) * (ny_ + 1); }
  Index element_count() const noexcept { return Index(2) * nx_ * ny_; }

  Index vertex_index(int i, int j) const noexcept { return Index(j) * (nx_ + 1) + i; }
  Point vertex(Index v) const noexcept;
  const std::vector<std::array<Index, 3>>& elements() const noexcept { return elements_; }

  // Pairs of vertices forming the boundary edges, ordered bottom, right, top, left.
  const std::vector<std::array<Index, 2>>& boundary_edges() const noexcept { return boundary_edges_; }

  bool on_boundary(Index v) const noexcept;

  // Throws ValidationError for points outside the closed unit square.
  PointLocation locate(Point p) const;

  // Nodal interpolant of a function of (x, y).
  template <typename F>
  Vector interpolate(F&& f) const {
    Vector out(vertex_count());
    for (Index v = 0; v < vertex_count(); ++v) {
      const Point p = vertex(v);
      out[v] = f(p.x, p.y);
    }
    return out;
  }

 private:
  int nx_;
  int ny_;
  std::vector<std::array<Index, 3>> elements_;
  std::vector<std::array<Index, 2>> boundary_edges_;
};

// P1 geometry of a single triangle.
struct ElementGeometry {
  double area = 0.0;
  // grad[a] = gradient of the barycentric basis function of local vertex a.
  std::array<Eigen::Vector2d, 3> grad;
};

ElementGeometry element_geometry(const Grid2D& grid, const std::array<Index, 3>& tri);

// Consistent P1 mass matrix (exact quadrature).
SparseMatrix assemble_mass(const Grid2D& grid);

// Row-sum lumped mass matrix as a diagonal vector.
Vector lumped_mass(const Grid2D& grid);

// Stiffness matrix of -div(theta grad .), theta a constant 2x2 tensor.
SparseMatrix assemble_stiffness(const Grid2D& grid, const Eigen::Matrix2d& theta);

// Boundary mass: integral over the boundary of phi_i phi_j.
SparseMatrix assemble_boundary_mass(const Grid2D& grid);

// Flat CSV export: vertex,x,y,value with row-major vertex ordering.
void write_field_csv(std::ostream& os, const Grid2D& grid, const Vector& values);
void write_field_csv(const std::string& path, const Grid2D& grid, const Vector& values);

// Reads a field written by write_field_csv; the vertex count must match the grid.
Vector read_field_csv(const std::string& path, const Grid2D& grid);

}  // namespace oed
