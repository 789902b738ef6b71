#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>

#include "oed/advection_diffusion.hpp"
#include "oed/criteria.hpp"
#include "oed/errors.hpp"
#include "support.hpp"

using namespace oed;
using namespace oedtest;

namespace {

LowRankHessian diagonal_lowrank(const Vector& sigma) {
  LowRankHessian lr;
  lr.u = Matrix::Identity(sigma.size(), sigma.size());
  lr.eigenvalues = sigma;
  lr.trailing_kind = LowRankHessian::Trailing::exact;
  return lr;
}

// 1/2 logdet(I + W H W^T) from a dense H.
double dense_eig(const Matrix& h, const Design& design) {
  const Index r = design.size();
  Matrix s(r, r);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b) s(a, b) = h(design[a], design[b]);
  return half_logdet_identity_plus(s);
}

Design random_design(Index d, Index r, std::mt19937_64& rng) {
  std::vector<Index> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), Index(0));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(r));
  return Design(all, d);
}

Matrix symmetric_sqrt(const Matrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

std::vector<Point> nine_sensors() {
  std::vector<Point> pts;
  for (double y : {0.25, 0.5, 0.75})
    for (double x : {0.2, 0.55, 0.8}) pts.push_back({x, y});
  return pts;
}

// Two-parameter linear-Gaussian toy: m ~ N(0, C), F = G m, three observations.
struct Toy {
  Matrix c{{1.0, 0.3}, {0.3, 0.5}};
  Matrix g{{1.0, 0.0}, {0.5, 1.0}, {0.2, -0.7}};
  Vector sigma{{0.5, 0.8, 0.6}};

  DlmcEstimator estimator(Index n_outer, Index n_inner, std::uint64_t seed) const {
    const Matrix l = c.llt().matrixL();
    return DlmcEstimator(
        [l](std::uint64_t s) {
          std::mt19937_64 rng(s);
          return Vector(l * random_vector(2, rng));
        },
        [this](const Vector& m) { return Vector(g * m); }, sigma, n_outer, n_inner, seed);
  }

  double closed_form(const Design& design) const {
    const Matrix winv = sigma.cwiseInverse().asDiagonal();
    return dense_eig(winv * g * c * g.transpose() * winv, design);
  }
};

}  // namespace

TEST_CASE("EIG mode names round trip") {
  for (EigMode m : {EigMode::linear_exact, EigMode::linear_lowrank, EigMode::la_map, EigMode::la_fixed_map,
                    EigMode::la_prior_sample, EigMode::dlmc})
    CHECK(eig_mode_from_string(to_string(m)) == m);
  CHECK(to_string(EigMode::la_prior_sample) == "la-prior-sample");
  CHECK_THROWS_AS(eig_mode_from_string("a-optimal"), ValidationError);
}

TEST_CASE("approx_eig_linear: diagonal cases") {
  const LowRankHessian lr = diagonal_lowrank(Vector{{3.0, 1.0, 0.0}});
  CHECK(approx_eig_linear(lr, Design::empty(3)) == 0.0);
  CHECK(approx_eig_linear(lr, Design({0}, 3)) == doctest::Approx(0.5 * std::log(4.0)).epsilon(1e-14));
  CHECK(approx_eig_linear(lr, Design({0, 1}, 3)) ==
        doctest::Approx(0.5 * (std::log(4.0) + std::log(2.0))).epsilon(1e-14));
  CHECK(approx_eig_linear(lr, Design({2}, 3)) == 0.0);
  CHECK_THROWS_AS(approx_eig_linear(lr, Design({0}, 4)), ValidationError);
}

TEST_CASE("approx_eig_linear at full rank matches the dense logdet on all 3-subsets of 9") {
  std::mt19937_64 rng(11);
  const Matrix h = random_spd(9, rng);
  const LowRankHessian lr = exact_lowrank(h, 9);
  int checked = 0;
  for (Index a = 0; a < 9; ++a)
    for (Index b = a + 1; b < 9; ++b)
      for (Index c = b + 1; c < 9; ++c) {
        const Design w({a, b, c}, 9);
        CHECK(rel_err(approx_eig_linear(lr, w), dense_eig(h, w)) <= 1e-10);
        ++checked;
      }
  CHECK(checked == 84);
}

TEST_CASE("approx_eig_linear is invariant to design ordering") {
  std::mt19937_64 rng(12);
  const LowRankHessian lr = exact_lowrank(random_spd(10, rng), 4);
  const double a = approx_eig_linear(lr, Design({1, 5, 7, 2}, 10));
  const double b = approx_eig_linear(lr, Design({7, 2, 1, 5}, 10));
  CHECK(std::abs(a - b) <= 1e-13 * a);
}

TEST_CASE("gap bound closed forms") {
  LowRankHessian lr = diagonal_lowrank(Vector{{2.0}});
  lr.u = Matrix::Identity(3, 1);
  lr.trailing = Vector::Zero(2);
  CHECK(eig_gap_bound(lr) == 0.0);
  lr.trailing = Vector::Ones(2);
  CHECK(eig_gap_bound(lr) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("approximation error is sandwiched by the trailing-spectrum bound") {
  std::mt19937_64 rng(13);
  for (int inst = 0; inst < 20; ++inst) {
    const Index d = 6 + inst % 7;
    const Matrix h = random_spd(d, rng);
    const Index k = 1 + inst % (d - 1);
    const LowRankHessian lr = exact_lowrank(h, k);
    const double bound = eig_gap_bound(lr);
    for (int t = 0; t < 50; ++t) {
      const Design w = random_design(d, 1 + Index(rng() % std::uint64_t(d)), rng);
      const double gap = dense_eig(h, w) - approx_eig_linear(lr, w);
      CHECK(gap >= -1e-12);
      CHECK(gap <= bound + 1e-10);
    }
  }
}

TEST_CASE("exact_eig_linear on a PDE toy") {
  const Grid2D g(3, 3);
  const AdvectionDiffusionModel model(g, VelocityField::analytic(g), nine_sensors());
  const PriorOperator prior(g, PriorParameters{}, Vector::Constant(g.vertex_count(), 0.25));
  const NoiseModel noise = NoiseModel::uniform(9, 0.02);
  const LinearizedModel lin = model.linearize(prior.mean());
  const Index n = prior.dim();

  CHECK(exact_eig_linear(lin, prior, noise, Design::empty(9)) == 0.0);
  CHECK_THROWS_AS(exact_eig_linear(lin, prior, noise, Design({0, 1, 2}, 9), 2), CapabilityError);

  SUBCASE("Weinstein-Aronszajn: parameter-space logdet agrees with the data-space one") {
    const Matrix j = dense_jacobian(lin, n);
    const Matrix s = symmetric_sqrt(dense_covariance(prior));
    std::mt19937_64 rng(14);
    for (int t = 0; t < 30; ++t) {
      const Design w = random_design(9, 1 + t % 9, rng);
      const Matrix jw = w.select_rows(j) / 0.02;
      const Matrix hm = s * jw.transpose() * jw * s;
      const double param_side = half_logdet_identity_plus(hm);
      CHECK(rel_err(exact_eig_linear(lin, prior, noise, w), param_side) <= 1e-8);
    }
  }
  SUBCASE("full-rank low-rank surrogate reproduces the exact value") {
    const LowRankHessian lr = build_lowrank(lin, prior, noise, 9, 0, 5);
    std::mt19937_64 rng(15);
    for (int t = 0; t < 20; ++t) {
      const Design w = random_design(9, 1 + t % 9, rng);
      CHECK(rel_err(approx_eig_linear(lr, w), exact_eig_linear(lin, prior, noise, w)) <= 1e-9);
    }
  }
}

TEST_CASE("restricted eigenvalues") {
  const Vector sigma{{5.0, 2.0, 0.5}};
  const LowRankHessian diag = diagonal_lowrank(sigma);
  CHECK(rel_err(restricted_eigenvalues(diag, Design::all(3)), sigma) <= 1e-14);
  CHECK(restricted_eigenvalues(diag, Design::empty(3)).size() == 0);

  std::mt19937_64 rng(16);
  LowRankHessian lr;
  lr.u = random_orthonormal(12, 4, rng);
  lr.eigenvalues = Vector{{4.0, 2.0, 1.0, 0.1}};
  for (Index j = 0; j < 12; ++j) {
    const Vector e = restricted_eigenvalues(lr, Design({j}, 12));
    REQUIRE(e.size() == 1);
    const double direct = lr.u.row(j).array().square().matrix().dot(lr.eigenvalues);
    CHECK(rel_err(e[0], direct) <= 1e-12);
  }
  for (int t = 0; t < 30; ++t) {
    const Design w = random_design(12, 1 + t % 12, rng);
    const Vector e = restricted_eigenvalues(lr, w);
    CHECK(e.size() <= std::min<Index>(w.size(), 4));
    for (Index i = 1; i < e.size(); ++i) CHECK(e[i] <= e[i - 1]);
    CHECK(e.minCoeff() >= 0.0);
    const Matrix wu = w.select_rows(lr.u);
    const double trace = (wu * lr.eigenvalues.asDiagonal() * wu.transpose()).trace();
    CHECK(rel_err(e.sum(), trace) <= 1e-12);
  }
}

TEST_CASE("laplace information drops non-positive eigenvalues") {
  CHECK(laplace_information(Vector{{0.0, -1e-14}}) == 0.0);
  CHECK(laplace_information(Vector{{3.0}}) == doctest::Approx(std::log(4.0) - 0.75).epsilon(1e-15));
}

TEST_CASE("la_eig closed forms and validation") {
  TrainingSample s;
  s.lowrank = diagonal_lowrank(Vector{{3.0, 1.0, 0.0}});
  s.prior_term = 0.7;
  const std::vector<TrainingSample> one{s};
  CHECK(la_eig(one, Design({0}, 3), LaMode::fixed_map) ==
        doctest::Approx(0.5 * (std::log(4.0) - 0.75) + 0.7).epsilon(1e-14));
  CHECK(la_eig(one, Design({0}, 3), LaMode::fixed_map, true) ==
        doctest::Approx(0.5 * (std::log(4.0) - 0.75)).epsilon(1e-14));

  TrainingSample s2 = s;
  s2.prior_term = 1.3;
  const std::vector<TrainingSample> two{s, s2};
  CHECK(la_eig(two, Design::empty(3), LaMode::prior_sample) == doctest::Approx(1.0));
  CHECK(la_eig(two, Design::empty(3), LaMode::prior_sample, true) == 0.0);
  CHECK_THROWS_AS(la_eig(std::vector<TrainingSample>{}, Design::empty(3), LaMode::fixed_map), ValidationError);

  TrainingSample other;
  other.lowrank = diagonal_lowrank(Vector{{1.0, 1.0}});
  CHECK_THROWS_AS(la_eig(std::vector<TrainingSample>{s, other}, Design::empty(3), LaMode::fixed_map),
                  ValidationError);
}

TEST_CASE("la_eig is monotone under sensor addition and the prior term does not change rankings") {
  std::mt19937_64 rng(17);
  std::vector<TrainingSample> samples(4);
  for (auto& s : samples) {
    s.lowrank = exact_lowrank(random_spd(15, rng), 6);
    s.prior_term = std::abs(random_vector(1, rng)[0]);
  }
  double offset = 0.0;
  for (const auto& s : samples) offset += s.prior_term;
  offset /= double(samples.size());
  for (int t = 0; t < 100; ++t) {
    const Design small = random_design(15, 1 + t % 10, rng);
    Index extra = 0;
    while (small.contains(extra)) extra = Index(rng() % 15);
    const Design big = small.with(extra);
    const double a = la_eig(samples, small, LaMode::fixed_map, true);
    const double b = la_eig(samples, big, LaMode::fixed_map, true);
    CHECK(b >= a - 1e-12);
    CHECK(la_eig(samples, big, LaMode::fixed_map) - b == doctest::Approx(offset).epsilon(1e-12));
  }
}

TEST_CASE("DLMC: zero signal gives zero information") {
  const DlmcEstimator est([](std::uint64_t s) { return Vector::Constant(2, double(s % 7)); },
                          [](const Vector&) { return Vector::Zero(3); }, Vector::Constant(3, 0.1), 300, 300, 5);
  const Design w = Design::all(3);
  CHECK(std::abs(est.evaluate(w)) <= 3.0 * est.standard_error(w) + 1e-12);
  CHECK(est.evaluate(Design::empty(3)) == 0.0);
}

TEST_CASE("DLMC matches the closed-form Gaussian EIG on a two-parameter toy") {
  const Toy toy;
  const DlmcEstimator est = toy.estimator(2000, 2000, 2024);
  const Design all = Design::all(3);
  const double exact = toy.closed_form(all);
  CHECK(rel_err(est.evaluate(all), exact) <= 0.05);

  SUBCASE("seed determinism") {
    CHECK(toy.estimator(200, 200, 9).evaluate(all) == toy.estimator(200, 200, 9).evaluate(all));
  }
  SUBCASE("nested designs are ordered within Monte Carlo error") {
    const Design a({0}, 3), b({0, 2}, 3);
    CHECK(toy.closed_form(a) <= toy.closed_form(b));
    const double da = est.evaluate(a), db = est.evaluate(b);
    CHECK(da <= db + 3.0 * (est.standard_error(a) + est.standard_error(b)));
    CHECK(rel_err(da, toy.closed_form(a)) <= 0.05);
  }
}

TEST_CASE("posterior pointwise variance") {
  const Grid2D g(4, 4);
  const AdvectionDiffusionModel model(g, VelocityField::analytic(g), nine_sensors());
  const PriorOperator prior(g, PriorParameters{}, Vector::Constant(g.vertex_count(), 0.25));
  const NoiseModel noise = NoiseModel::uniform(9, 0.01);
  const LinearizedModel lin = model.linearize(prior.mean());
  const Matrix cov = dense_covariance(prior);
  const Vector prior_var = cov.diagonal();

  CHECK(rel_err(posterior_pointwise_variance(prior, lin, noise, Design::empty(9)), prior_var) <= 1e-10);

  const Matrix j = dense_jacobian(lin, prior.dim());
  for (const Design& w : {Design({4}, 9), Design({0, 4, 8}, 9), Design::all(9)}) {
    const Vector var = posterior_pointwise_variance(prior, lin, noise, w);
    CHECK((var.array() <= prior_var.array() + 1e-10).all());
    const Matrix jw = w.select_rows(j) / 0.01;
    const Matrix post = (jw.transpose() * jw + dense_precision(prior)).inverse();
    CHECK(rel_err(var, Vector(post.diagonal())) <= 1e-6);
  }
}
