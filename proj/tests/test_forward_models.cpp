#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oed/advection_diffusion.hpp"
#include "oed/errors.hpp"
#include "oed/lognormal_diffusion.hpp"
#include "support.hpp"

using namespace oed;
using namespace oedtest;

namespace {

std::vector<Point> nine_sensors() {
  std::vector<Point> pts;
  for (double y : {0.25, 0.5, 0.75})
    for (double x : {0.2, 0.55, 0.8}) pts.push_back({x, y});
  return pts;
}

AdvectionDiffusionModel ad_model(int n, AdvectionDiffusionSettings s = {}) {
  const Grid2D g(n, n);
  return AdvectionDiffusionModel(g, VelocityField::analytic(g), nine_sensors(), s);
}

LogNormalDiffusionModel ln_model(int n) {
  return LogNormalDiffusionModel(Grid2D(n, n), SensorArray::lattice(5, 5, 0.1, 0.9, 0.1, 0.9));
}

double adjoint_mismatch(const LinearizedModel& lin, Index n, Index d, std::mt19937_64& rng) {
  const Vector dm = random_vector(n, rng);
  const Vector z = random_vector(d, rng);
  const double lhs = z.dot(lin.jacobian_action(dm));
  const double rhs = lin.jacobian_transpose_action(z).dot(dm);
  return std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300);
}

double fd_mismatch(const ForwardModel& model, const Vector& m, const Vector& dm) {
  const double h = 1e-5 * std::max(1.0, m.norm()) / dm.norm();
  const Vector fd = (model.forward_map(m + h * dm) - model.forward_map(m - h * dm)) / (2.0 * h);
  const Vector jd = model.linearize(m).jacobian_action(dm);
  return rel_err(fd, jd);
}

}  // namespace

TEST_CASE("sensor interpolation rows are a partition of unity") {
  const Grid2D g(4, 4);
  const SensorArray s(g, nine_sensors());
  const Matrix b = dense(s.interpolation());
  CHECK(b.rows() == 9);
  CHECK((b.rowwise().sum() - Vector::Ones(9)).norm() < 1e-14);
  CHECK_THROWS_AS(SensorArray(g, {{0.5, 0.5}, {0.5, 0.5}}), ValidationError);
  CHECK_THROWS_AS(SensorArray(g, {{1.5, 0.5}}), ValidationError);
  // a sensor on a vertex reads the nodal value
  const SensorArray v(g, {{0.25, 0.75}});
  const Vector f = g.interpolate([](double x, double y) { return x * x + y; });
  CHECK((dense(v.interpolation()) * f)[0] == doctest::Approx(f[g.vertex_index(1, 3)]).epsilon(1e-14));
  const auto lat = SensorArray::lattice(3, 2, 0.1, 0.9, 0.2, 0.8);
  REQUIRE(lat.size() == 6);
  CHECK(lat[1].x == doctest::Approx(0.5));
  CHECK(lat[3].y == doctest::Approx(0.8));
}

TEST_CASE("noise model validation and whitening") {
  CHECK_THROWS_AS(NoiseModel(Vector::Zero(3)), ValidationError);
  const NoiseModel n(Vector::Constant(3, 0.5));
  CHECK(n.whiten(Vector::Ones(3)) == Vector::Constant(3, 2.0));
  const Design w({2, 0}, 3);
  CHECK(n.apply_inverse(Vector::Ones(2), w) == Vector::Constant(2, 4.0));
}

TEST_CASE("analytic velocity is discretely divergence free") {
  for (int n : {4, 16, 32}) {
    const Grid2D g(n, n);
    CHECK(VelocityField::analytic(g).discrete_divergence(g) < 1e-10);
  }
}

TEST_CASE("advection-diffusion: zero initial condition stays zero, map is linear") {
  const AdvectionDiffusionModel model = ad_model(8);
  const State s0 = model.solve_forward(Vector::Zero(model.parameter_dim()));
  CHECK(s0.snapshots.size() == 41);
  for (const auto& u : s0.snapshots) CHECK(u.norm() == 0.0);

  std::mt19937_64 rng(3);
  const Vector m1 = random_vector(model.parameter_dim(), rng);
  const Vector m2 = random_vector(model.parameter_dim(), rng);
  const Vector lhs = model.forward_map(2.5 * m1 + m2);
  const Vector rhs = 2.5 * model.forward_map(m1) + model.forward_map(m2);
  CHECK(rel_err(lhs, rhs) < 1e-10);
}

TEST_CASE("advection-diffusion conserves mass with zero-flux boundaries") {
  const AdvectionDiffusionModel model = ad_model(16);
  const Vector m = gaussian_blob_initial_condition(model.grid());
  const State s = model.solve_forward(m);
  const Vector ones = Vector::Ones(model.parameter_dim());
  const double m0 = ones.dot(model.mass() * s.snapshots.front());
  for (std::size_t t = 1; t < s.snapshots.size(); ++t) {
    const double mt = ones.dot(model.mass() * s.snapshots[t]);
    CHECK(std::abs(mt - m0) / m0 < 1e-8);
  }
}

TEST_CASE("advection-diffusion observes blob data and supports several observation times") {
  AdvectionDiffusionSettings s;
  s.observation_steps = {20, 40};
  const AdvectionDiffusionModel model = ad_model(8, s);
  CHECK(model.candidate_count() == 18);
  const AdvectionDiffusionModel final_only = ad_model(8);
  const Vector m = gaussian_blob_initial_condition(model.grid());
  const Vector both = model.forward_map(m);
  CHECK(rel_err(Vector(both.tail(9)), final_only.forward_map(m)) < 1e-14);
  const Vector blob = gaussian_blob_initial_condition(Grid2D(32, 32));
  CHECK(blob.maxCoeff() == doctest::Approx(0.5));
}

TEST_CASE("advection-diffusion Jacobian equals F and does not depend on m") {
  const AdvectionDiffusionModel model = ad_model(4);
  std::mt19937_64 rng(5);
  const Index n = model.parameter_dim();
  const Vector dm = random_vector(n, rng);
  const LinearizedModel l1 = model.linearize(random_vector(n, rng));
  const LinearizedModel l2 = model.linearize(random_vector(n, rng));
  CHECK((l1.jacobian_action(dm) - l2.jacobian_action(dm)).norm() <= 1e-10 * model.forward_map(dm).norm());
  CHECK(rel_err(l1.jacobian_action(dm), model.forward_map(dm)) < 1e-12);
  CHECK(l1.jacobian_action(Vector::Zero(n)).norm() == 0.0);
  CHECK(l1.jacobian_transpose_action(Vector::Zero(9)).norm() == 0.0);
}

TEST_CASE("adjoint identity and dense transpose oracle on both models") {
  std::mt19937_64 rng(11);
  SUBCASE("advection-diffusion") {
    for (int n : {4, 16}) {
      const AdvectionDiffusionModel model = ad_model(n);
      const LinearizedModel lin = model.linearize(Vector::Zero(model.parameter_dim()));
      for (int t = 0; t < 20; ++t) CHECK(adjoint_mismatch(lin, model.parameter_dim(), 9, rng) < 1e-10);
    }
    const AdvectionDiffusionModel model = ad_model(4);
    const LinearizedModel lin = model.linearize(Vector::Zero(model.parameter_dim()));
    const Matrix j = dense_jacobian(lin, model.parameter_dim());
    const Vector z = random_vector(9, rng);
    CHECK(rel_err(lin.jacobian_transpose_action(z), Vector(j.transpose() * z)) < 1e-8);
  }
  SUBCASE("log-normal diffusion") {
    for (int n : {4, 16}) {
      const LogNormalDiffusionModel model = ln_model(n);
      const LinearizedModel lin = model.linearize(0.5 * random_vector(model.parameter_dim(), rng));
      for (int t = 0; t < 20; ++t) CHECK(adjoint_mismatch(lin, model.parameter_dim(), 25, rng) < 1e-10);
    }
    const LogNormalDiffusionModel model = ln_model(4);
    const LinearizedModel lin = model.linearize(0.3 * random_vector(model.parameter_dim(), rng));
    const Matrix j = dense_jacobian(lin, model.parameter_dim());
    const Vector z = random_vector(25, rng);
    CHECK(rel_err(lin.jacobian_transpose_action(z), Vector(j.transpose() * z)) < 1e-8);
  }
}

TEST_CASE("central differences agree with Jacobian actions") {
  std::mt19937_64 rng(13);
  for (int n : {4, 16}) {
    const AdvectionDiffusionModel ad = ad_model(n);
    CHECK(fd_mismatch(ad, random_vector(ad.parameter_dim(), rng), random_vector(ad.parameter_dim(), rng)) < 1e-5);
    const LogNormalDiffusionModel ln = ln_model(n);
    for (int t = 0; t < 3; ++t) {
      const Vector m = 0.5 * random_vector(ln.parameter_dim(), rng);
      CHECK(fd_mismatch(ln, m, random_vector(ln.parameter_dim(), rng)) < 1e-5);
    }
  }
}

TEST_CASE("log-normal model: constant coefficient gives the linear profile") {
  const LogNormalDiffusionModel model = ln_model(8);
  for (double c : {-1.0, 0.0, 2.0}) {
    const State s = model.solve_forward(Vector::Constant(model.parameter_dim(), c));
    const Vector expect = model.grid().interpolate([](double, double y) { return y; });
    CHECK((s.snapshots[0] - expect).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("log-normal model obeys the discrete maximum principle") {
  const LogNormalDiffusionModel model = ln_model(16);
  std::mt19937_64 rng(17);
  for (int t = 0; t < 5; ++t) {
    const State s = model.solve_forward(random_vector(model.parameter_dim(), rng));
    CHECK(s.snapshots[0].minCoeff() >= -1e-10);
    CHECK(s.snapshots[0].maxCoeff() <= 1.0 + 1e-10);
  }
  CHECK_THROWS_AS(model.solve_forward(Vector::Constant(model.parameter_dim(), 1000.0)), NumericalError);
}

TEST_CASE("log-normal Jacobian at m = 0 matches a dense direct differentiation") {
  const LogNormalDiffusionModel model = ln_model(4);
  const Grid2D& g = model.grid();
  const Index n = model.parameter_dim();
  const Vector m = Vector::Zero(n);
  const Matrix k = dense(model.stiffness(m));
  const Vector u = model.solve_forward(m).snapshots[0];
  const auto& free = model.free_dofs();
  const Index nf = Index(free.size());
  Matrix kff(nf, nf);
  for (Index a = 0; a < nf; ++a)
    for (Index b = 0; b < nf; ++b) kff(a, b) = k(free[a], free[b]);
  const Matrix b_all = dense(model.sensors().interpolation());
  Matrix expect(model.candidate_count(), n);
  for (Index i = 0; i < n; ++i) {
    // dK/dm_i with element weight area * mean(exp(m)), exp(0) = 1
    Matrix dk = Matrix::Zero(n, n);
    for (const auto& tri : g.elements()) {
      if (tri[0] != i && tri[1] != i && tri[2] != i) continue;
      const ElementGeometry geo = element_geometry(g, tri);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) dk(tri[a], tri[b]) += geo.area / 3.0 * geo.grad[a].dot(geo.grad[b]);
    }
    const Vector r = dk * u;
    Vector rf(nf);
    for (Index a = 0; a < nf; ++a) rf[a] = r[free[a]];
    const Vector duf = -kff.lu().solve(rf);
    Vector du = Vector::Zero(n);
    for (Index a = 0; a < nf; ++a) du[free[a]] = duf[a];
    expect.col(i) = b_all * du;
  }
  const Matrix j = dense_jacobian(model.linearize(m), n);
  CHECK(rel_err(j, expect) < 1e-8);
}

TEST_CASE("observation through designs and state handles") {
  const AdvectionDiffusionModel model = ad_model(4);
  State ones{{Vector::Ones(model.parameter_dim())}};
  const LogNormalDiffusionModel ln = ln_model(4);
  const Vector obs = ln.observe(ones);
  CHECK((obs - Vector::Ones(25)).norm() < 1e-14);
  CHECK(ln.observe(ones, Design::all(25)) == obs);
  CHECK(ln.observe(ones, Design({3, 1}, 25)).size() == 2);
  CHECK_THROWS_AS(ln.observe(ones, Design({3}, 9)), ValidationError);
  CHECK_THROWS_AS(Design({30}, 25), ValidationError);
  const LinearizedModel empty;
  CHECK_THROWS_AS(empty.jacobian_action(Vector::Zero(3)), StateError);
  CHECK_THROWS_AS(model.forward_map(Vector::Zero(3)), ValidationError);
}

TEST_CASE("solve counters record forward and incremental solves") {
  const LogNormalDiffusionModel model = ln_model(4);
  const long long before = model.solves().total();
  const LinearizedModel lin = model.linearize(Vector::Zero(model.parameter_dim()));
  lin.jacobian_action(Vector::Ones(model.parameter_dim()));
  lin.jacobian_transpose_action(Vector::Ones(25));
  CHECK(model.solves().total() - before == 3);
}
