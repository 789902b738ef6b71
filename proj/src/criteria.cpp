#include "oed/criteria.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

#include "oed/errors.hpp"

namespace oed {

std::string to_string(EigMode mode) {
  switch (mode) {
    case EigMode::linear_exact:
      return "linear-exact";
    case EigMode::linear_lowrank:
      return "linear-lowrank";
    case EigMode::la_map:
      return "la-map";
    case EigMode::la_fixed_map:
      return "la-fixed-map";
    case EigMode::la_prior_sample:
      return "la-prior-sample";
    case EigMode::dlmc:
      return "dlmc";
  }
  return "unknown";
}

EigMode eig_mode_from_string(const std::string& name) {
  for (EigMode m : {EigMode::linear_exact, EigMode::linear_lowrank, EigMode::la_map, EigMode::la_fixed_map,
                    EigMode::la_prior_sample, EigMode::dlmc}) {
    if (to_string(m) == name) return m;
  }
  throw ValidationError("unknown EIG mode '" + name + "'");
}

namespace {

void check_design(const LowRankHessian& lr, const Design& design) {
  if (design.candidates() != lr.dim()) {
    throw ValidationError("design over " + std::to_string(design.candidates()) + " candidates used with d = " +
                          std::to_string(lr.dim()));
  }
}

// W U Sigma^{1/2}
Matrix weighted_rows(const LowRankHessian& lr, const Design& design) {
  Matrix v = design.select_rows(lr.u);
  for (Index j = 0; j < v.cols(); ++j) v.col(j) *= std::sqrt(std::max(lr.eigenvalues[j], 0.0));
  return v;
}

// Smaller of V V^T and V^T V; both share their nonzero eigenvalues.
Matrix small_gram(const Matrix& v) {
  return v.rows() <= v.cols() ? Matrix(v * v.transpose()) : Matrix(v.transpose() * v);
}

double half_logdet_identity_plus(const Matrix& g) {
  const Index n = g.rows();
  if (n == 0) return 0.0;
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) + g);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of I + W H W^T failed");
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += std::log(llt.matrixL()(i, i));
  if (!std::isfinite(s)) throw NumericalError("non-finite log-determinant");
  return s;
}

}  // namespace

double approx_eig_linear(const LowRankHessian& lr, const Design& design) {
  check_design(lr, design);
  if (design.empty() || lr.rank() == 0) return 0.0;
  return half_logdet_identity_plus(small_gram(weighted_rows(lr, design)));
}

double exact_eig_linear(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise,
                        const Design& design, Index max_dense) {
  if (design.candidates() != noise.size()) throw ValidationError("design does not match noise model");
  if (design.size() > max_dense) {
    throw CapabilityError("exact_eig_linear: " + std::to_string(design.size()) + " sensors exceed dense limit " +
                          std::to_string(max_dense));
  }
  const Index r = design.size();
  if (r == 0) return 0.0;
  Matrix g(r, r);
  for (Index t = 0; t < r; ++t) {
    Vector e = Vector::Zero(noise.size());
    e[design[t]] = 1.0;
    g.col(t) = design.select(hd_action(lin, prior, noise, e));
  }
  return half_logdet_identity_plus(0.5 * (g + g.transpose()));
}

double eig_gap_bound(const LowRankHessian& lr) {
  double s = 0.0;
  for (Index i = 0; i < lr.trailing.size(); ++i) s += std::log1p(std::max(lr.trailing[i], 0.0));
  return 0.5 * s;
}

Vector restricted_eigenvalues(const LowRankHessian& lr, const Design& design) {
  check_design(lr, design);
  if (design.empty() || lr.rank() == 0) return Vector(0);
  const Matrix g = small_gram(weighted_rows(lr, design));
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("restricted eigenvalue solve failed");
  const Vector asc = es.eigenvalues();
  Vector out(asc.size());
  for (Index i = 0; i < asc.size(); ++i) out[i] = std::max(asc[asc.size() - 1 - i], 0.0);
  return out;
}

double laplace_information(const Vector& eigenvalues) {
  double s = 0.0;
  for (Index j = 0; j < eigenvalues.size(); ++j) {
    const double l = eigenvalues[j];
    if (l <= 0.0) continue;
    s += std::log1p(l) - l / (1.0 + l);
  }
  return s;
}

double la_eig(std::span<const TrainingSample> samples, const Design& design, LaMode /*mode*/, bool reduced) {
  if (samples.empty()) throw ValidationError("la_eig requires at least one training sample");
  const Index d = samples.front().lowrank.dim();
  double total = 0.0;
  for (const TrainingSample& s : samples) {
    if (s.lowrank.dim() != d) throw ValidationError("training samples disagree on candidate count");
    double term = 0.5 * laplace_information(restricted_eigenvalues(s.lowrank, design));
    if (!reduced) term += s.prior_term;
    total += term;
  }
  return total / double(samples.size());
}

DlmcEstimator::DlmcEstimator(const Sampler& sample_prior, const Forward& forward_all, const Vector& sigma,
                             Index n_outer, Index n_inner, std::uint64_t seed)
    : sigma_(sigma) {
  if (n_outer <= 0 || n_inner <= 0) throw ValidationError("DLMC sample counts must be positive");
  const Index d = sigma.size();
  outer_pred_.resize(d, n_outer);
  outer_data_.resize(d, n_outer);
  inner_pred_.resize(d, n_inner);
  const std::uint64_t outer_seed = derive_seed(seed, 0);
  const std::uint64_t noise_seed = derive_seed(seed, 1);
  const std::uint64_t inner_seed = derive_seed(seed, 2);
  for (Index i = 0; i < n_outer; ++i) {
    const Vector f = forward_all(sample_prior(derive_seed(outer_seed, std::uint64_t(i))));
    if (f.size() != d) throw ValidationError("forward map output does not match noise dimension");
    std::mt19937_64 rng(derive_seed(noise_seed, std::uint64_t(i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    outer_pred_.col(i) = f;
    for (Index j = 0; j < d; ++j) outer_data_(j, i) = f[j] + sigma[j] * normal(rng);
  }
  for (Index j = 0; j < n_inner; ++j) {
    inner_pred_.col(j) = forward_all(sample_prior(derive_seed(inner_seed, std::uint64_t(j))));
  }
  if (!outer_pred_.allFinite() || !inner_pred_.allFinite()) throw NumericalError("DLMC forward evaluations not finite");
}

DlmcEstimator::DlmcEstimator(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                             Index n_outer, Index n_inner, std::uint64_t seed)
    : DlmcEstimator([&prior](std::uint64_t s) { return prior.sample(s); },
                    [&model](const Vector& m) { return model.forward_map(m); }, noise.sigma(), n_outer, n_inner,
                    seed) {}

Vector DlmcEstimator::terms(const Design& design) const {
  if (design.candidates() != sigma_.size()) throw ValidationError("design does not match DLMC candidate count");
  const Index r = design.size();
  const Index n_out = outer_data_.cols();
  const Index n_in = inner_pred_.cols();
  Matrix y(r, n_out), own(r, n_out), inner(r, n_in);
  for (Index t = 0; t < r; ++t) {
    const Index j = design[t];
    const double w = 1.0 / sigma_[j];
    y.row(t) = outer_data_.row(j) * w;
    own.row(t) = outer_pred_.row(j) * w;
    inner.row(t) = inner_pred_.row(j) * w;
  }
  const Vector inner_sq = inner.colwise().squaredNorm().transpose();
  const double log_n = std::log(double(n_in));
  Vector out(n_out);
  for (Index i = 0; i < n_out; ++i) {
    const double own_ll = -0.5 * (y.col(i) - own.col(i)).squaredNorm();
    // -1/2 |y - f_j|^2 = -1/2 |y|^2 + y.f_j - 1/2 |f_j|^2
    const Vector ll = (-0.5 * y.col(i).squaredNorm()) + (inner.transpose() * y.col(i)).array() - 0.5 * inner_sq.array();
    const double mx = ll.maxCoeff();
    const double lse = mx + std::log((ll.array() - mx).exp().sum());
    out[i] = own_ll - (lse - log_n);
  }
  if (!out.allFinite()) throw NumericalError("DLMC estimate is not finite");
  return out;
}

double DlmcEstimator::evaluate(const Design& design) const {
  if (design.empty()) return 0.0;
  return terms(design).mean();
}

double DlmcEstimator::standard_error(const Design& design) const {
  if (design.empty()) return 0.0;
  const Vector t = terms(design);
  const double mean = t.mean();
  const double var = (t.array() - mean).square().sum() / double(std::max<Index>(t.size() - 1, 1));
  return std::sqrt(var / double(t.size()));
}

double dlmc_eig(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise, const Design& design,
                Index n_outer, Index n_inner, std::uint64_t seed) {
  return DlmcEstimator(model, prior, noise, n_outer, n_inner, seed).evaluate(design);
}

Vector posterior_pointwise_variance(const PriorOperator& prior, const Vector& prior_variance,
                                    const LinearizedModel& lin, const NoiseModel& noise, const Design& design,
                                    std::optional<Index> rank, std::uint64_t seed) {
  if (prior_variance.size() != prior.dim()) throw ValidationError("prior variance has wrong length");
  if (design.candidates() != noise.size()) throw ValidationError("design does not match noise model");
  const Index r = design.size();
  if (r == 0) return prior_variance;
  const Index n = prior.dim();
  const Index k = std::min(rank.value_or(r), n);
  const Index p = std::min<Index>(10, n - k);
  SymmetricOperator op = [&](const Matrix& x) {
    Matrix out(n, x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
      const Vector jd = design.select(lin.jacobian_action(prior.apply_sqrt(x.col(c))));
      const Vector z = design.scatter(noise.apply_inverse(jd, design));
      out.col(c) = prior.apply_sqrt_transpose(lin.jacobian_transpose_action(z));
    }
    return out;
  };
  const LowRankHessian eig = randomized_eigs(op, n, k, p, seed);
  Vector var = prior_variance;
  for (Index j = 0; j < eig.rank(); ++j) {
    const double l = eig.eigenvalues[j];
    if (l <= 0.0) continue;
    const Vector sv = prior.apply_sqrt(eig.u.col(j));
    var -= (l / (1.0 + l)) * sv.cwiseAbs2();
  }
  return var;
}

Vector posterior_pointwise_variance(const PriorOperator& prior, const LinearizedModel& lin, const NoiseModel& noise,
                                    const Design& design, std::optional<Index> rank, std::uint64_t seed) {
  return posterior_pointwise_variance(prior, prior.covariance_diagonal(), lin, noise, design, rank, seed);
}

}  // namespace oed
