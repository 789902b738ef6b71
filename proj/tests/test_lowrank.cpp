#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oed/advection_diffusion.hpp"
#include "oed/criteria.hpp"
#include "oed/errors.hpp"
#include "oed/lognormal_diffusion.hpp"
#include "oed/lowrank.hpp"
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

struct AdSetup {
  Grid2D grid;
  AdvectionDiffusionModel model;
  PriorOperator prior;
  NoiseModel noise;
};

AdSetup ad_setup(int n, const std::vector<Point>& sensors) {
  const Grid2D g(n, n);
  AdvectionDiffusionModel model(g, VelocityField::analytic(g), sensors);
  PriorOperator prior(g, PriorParameters{}, Vector::Constant(g.vertex_count(), 0.25));
  const double sigma = 0.01 * model.forward_map(gaussian_blob_initial_condition(g)).cwiseAbs().maxCoeff();
  return AdSetup{g, std::move(model), std::move(prior), NoiseModel::uniform(Index(sensors.size()), sigma)};
}

Vector sorted_desc(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  return es.eigenvalues().reverse();
}

long long count_actions(const SymmetricOperator& op, Index d, Index k, Index p, long long* calls) {
  SymmetricOperator counted = [&](const Matrix& x) {
    *calls += x.cols();
    return op(x);
  };
  return randomized_eigs(counted, d, k, p, 1).operator_actions;
}

}  // namespace

TEST_CASE("diagonal operator with k + p = d is recovered exactly") {
  Vector diag = Vector::Zero(10);
  diag.head(5) << 5, 4, 3, 2, 1;
  const LowRankHessian lr = randomized_eigs(dense_operator(diag.asDiagonal()), 10, 3, 7, 9);
  REQUIRE(lr.rank() == 3);
  CHECK(std::abs(lr.eigenvalues[0] - 5) < 1e-10);
  CHECK(std::abs(lr.eigenvalues[1] - 4) < 1e-10);
  CHECK(std::abs(lr.eigenvalues[2] - 3) < 1e-10);
  CHECK((lr.u.transpose() * lr.u - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(lr.trailing_kind == LowRankHessian::Trailing::estimate);
}

TEST_CASE("rank-two operator: eigenvalues and subspace") {
  std::mt19937_64 rng(1);
  const Matrix uv = random_orthonormal(12, 2, rng);
  const Matrix h = uv * uv.transpose();
  const LowRankHessian lr = randomized_eigs(dense_operator(h), 12, 2, 0, 4);
  CHECK(std::abs(lr.eigenvalues[0] - 1.0) < 1e-10);
  CHECK(std::abs(lr.eigenvalues[1] - 1.0) < 1e-10);
  CHECK((lr.u * lr.u.transpose() - h).norm() < 1e-10);
}

TEST_CASE("rank-deficient sketch reduces k and flags it") {
  std::mt19937_64 rng(2);
  const Matrix uv = random_orthonormal(12, 2, rng);
  const LowRankHessian lr = randomized_eigs(dense_operator(3.0 * uv * uv.transpose()), 12, 5, 2, 4);
  CHECK(lr.rank_deficient);
  CHECK(lr.rank() == 2);
  CHECK(lr.eigenvalues.minCoeff() == doctest::Approx(3.0));
  const LowRankHessian zero = randomized_eigs(dense_operator(Matrix::Zero(6, 6)), 6, 2, 1, 4);
  CHECK(zero.rank() == 0);
  CHECK(zero.rank_deficient);
}

TEST_CASE("geometric spectrum is captured within one percent") {
  std::mt19937_64 rng(3);
  Vector eigs(50);
  for (Index i = 0; i < 50; ++i) eigs[i] = std::pow(2.0, -double(i + 1));
  const Matrix h = spd_with_spectrum(eigs, rng);
  const LowRankHessian lr = randomized_eigs(dense_operator(h), 50, 10, 10, 17);
  const Vector exact = sorted_desc(h);
  for (Index i = 0; i < 10; ++i) CHECK(rel_err(lr.eigenvalues[i], exact[i]) < 0.01);
}

TEST_CASE("operator is applied exactly 2(k + p) times and results are seed-deterministic") {
  std::mt19937_64 rng(4);
  const Matrix h = random_spd(20, rng);
  long long calls = 0;
  CHECK(count_actions(dense_operator(h), 20, 6, 4, &calls) == 20);
  CHECK(calls == 20);
  const LowRankHessian a = randomized_eigs(dense_operator(h), 20, 6, 4, 99);
  const LowRankHessian b = randomized_eigs(dense_operator(h), 20, 6, 4, 99);
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK((a.u * a.u.transpose() - b.u * b.u.transpose()).norm() < 1e-10);
  CHECK_THROWS_AS(randomized_eigs(dense_operator(h), 20, 15, 10, 1), ValidationError);
}

TEST_CASE("gap bound is non-increasing in k with exact trailing spectra") {
  std::mt19937_64 rng(5);
  const Matrix h = random_spd(12, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (Index k = 0; k <= 12; ++k) {
    const double b = eig_gap_bound(exact_lowrank(h, k));
    CHECK(b <= prev + 1e-15);
    prev = b;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("adaptive truncation keeps eigenvalues above the ratio") {
  LowRankHessian lr = exact_lowrank(Vector(Vector{{1.0, 1e-2, 1e-5, 1e-7, 1e-9}}).asDiagonal(), 5);
  const LowRankHessian t = truncate_adaptive(lr, 1e-6);
  CHECK(t.rank() == 3);
  CHECK(t.trailing.size() == 2);
  CHECK(t.trailing[0] == doctest::Approx(1e-7));
}

TEST_CASE("hd_action: symmetric, PSD and equal to the dense product on a 4x4 grid") {
  AdSetup s = ad_setup(4, nine_sensors());
  const Index n = s.prior.dim();
  const LinearizedModel lin = s.model.linearize(s.prior.mean());
  const Matrix hd = assemble_hd(lin, s.prior, s.noise);
  const Matrix j = dense_jacobian(lin, n);
  const Matrix winv = s.noise.sigma().cwiseInverse().asDiagonal();
  const Matrix expect = winv * j * dense_covariance(s.prior) * j.transpose() * winv;
  CHECK(rel_err(hd, expect) < 1e-10);
  CHECK(sorted_desc(0.5 * (hd + hd.transpose())).minCoeff() >= -1e-10 * hd.norm());
  CHECK(hd_action(lin, s.prior, s.noise, Vector::Zero(9)).norm() == 0.0);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Vector z1 = random_vector(9, rng), z2 = random_vector(9, rng);
    const double a = z1.dot(hd_action(lin, s.prior, s.noise, z2));
    const double b = z2.dot(hd_action(lin, s.prior, s.noise, z1));
    CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
  }

  SUBCASE("full build equals the dense eigendecomposition") {
    const LowRankHessian lr = build_lowrank(lin, s.prior, s.noise, 9, 0, 3);
    CHECK(lr.operator_actions == 18);
    CHECK(rel_err(lr.eigenvalues, sorted_desc(hd)) < 1e-10);
    CHECK(rel_err(Matrix(lr.u * lr.eigenvalues.asDiagonal() * lr.u.transpose()), hd) < 1e-10);
  }
  SUBCASE("linear model spectra do not depend on the linearization point") {
    std::mt19937_64 r(8);
    const LowRankHessian a = build_lowrank(s.model, s.prior, s.noise, random_vector(n, r), 5, 4, 3);
    const LowRankHessian b = build_lowrank(s.model, s.prior, s.noise, random_vector(n, r), 5, 4, 3);
    CHECK(rel_err(a.eigenvalues, b.eigenvalues) < 1e-8);
  }
}

TEST_CASE("hd_action PSD on the log-normal model") {
  const Grid2D g(4, 4);
  const LogNormalDiffusionModel model(g, SensorArray::lattice(3, 3, 0.2, 0.8, 0.2, 0.8));
  PriorParameters p;
  p.gamma = 0.04;
  p.delta = 0.2;
  const PriorOperator prior(g, p, Vector::Zero(g.vertex_count()));
  const NoiseModel noise = NoiseModel::uniform(9, 0.01);
  const Matrix hd = assemble_hd(model.linearize(prior.sample(3)), prior, noise);
  CHECK((hd - hd.transpose()).norm() <= 1e-10 * hd.norm());
  CHECK(sorted_desc(0.5 * (hd + hd.transpose())).minCoeff() >= -1e-10 * hd.norm());
}

TEST_CASE("spectrum decays by four orders on the 32x32 advection-diffusion lattice") {
  AdSetup s = ad_setup(32, SensorArray::lattice(15, 5, 0.05, 0.95, 0.1, 0.9));
  const LowRankHessian lr = build_lowrank(s.model, s.prior, s.noise, s.prior.mean(), 75, 0, 21);
  REQUIRE(lr.rank() > 0);
  // Directions dropped as numerically null sit below the smallest retained one.
  const double ratio = lr.eigenvalues[lr.rank() - 1] / lr.eigenvalues[0];
  MESSAGE("rank " << lr.rank() << ", lambda_75 / lambda_1 <= " << ratio);
  CHECK(ratio <= 1e-4);
}

TEST_CASE("persistence round trip is exact and deterministic") {
  std::mt19937_64 rng(9);
  const Matrix h = random_spd(15, rng);
  const LowRankHessian lr = randomized_eigs(dense_operator(h), 15, 5, 5, 7);
  const auto dir = std::filesystem::temp_directory_path() / "oed_lowrank_roundtrip";
  std::filesystem::create_directories(dir);
  const std::string stem = (dir / "a").string();
  save_lowrank(lr, stem);
  const LowRankHessian back = load_lowrank(stem);
  CHECK(back.u == lr.u);
  CHECK(back.eigenvalues == lr.eigenvalues);
  CHECK(back.trailing == lr.trailing);
  CHECK(back.trailing_kind == lr.trailing_kind);
  CHECK(back.operator_actions == lr.operator_actions);
  save_lowrank(randomized_eigs(dense_operator(h), 15, 5, 5, 7), (dir / "b").string());
  auto slurp = [](const std::string& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  CHECK(slurp(stem + "_eigenvalues.csv") == slurp((dir / "b").string() + "_eigenvalues.csv"));
  CHECK_THROWS_AS(load_lowrank((dir / "missing").string()), IoError);
  std::filesystem::remove_all(dir);
}
