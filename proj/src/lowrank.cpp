#include "oed/lowrank.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <fstream>
#include <random>

#include "oed/csv.hpp"
#include "oed/errors.hpp"

namespace oed {

namespace {

// Negative round-off eigenvalues of a PSD operator are clamped to zero.
Vector clamp_nonnegative(Vector v) { return v.cwiseMax(0.0); }

struct SortedEig {
  Vector values;
  Matrix vectors;
};

SortedEig descending_eig(const Matrix& b) {
  const Matrix sym = 0.5 * (b + b.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("dense symmetric eigensolver failed");
  const Index n = sym.rows();
  SortedEig out{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values[i] = es.eigenvalues()[n - 1 - i];
    out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return out;
}

}  // namespace

LowRankHessian randomized_eigs(const SymmetricOperator& op, Index d, Index k, Index p, std::uint64_t seed) {
  if (d <= 0 || k < 0 || p < 0) throw ValidationError("randomized_eigs: dimensions must be non-negative");
  if (k + p > d) {
    throw ValidationError("randomized_eigs: k + p = " + std::to_string(k + p) + " exceeds d = " + std::to_string(d));
  }
  const Index l = k + p;
  LowRankHessian lr;
  if (l == 0) {
    lr.u = Matrix(d, 0);
    lr.eigenvalues = Vector(0);
    lr.trailing = Vector(0);
    return lr;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix omega(d, l);
  for (Index j = 0; j < l; ++j)
    for (Index i = 0; i < d; ++i) omega(i, j) = normal(rng);

  const Matrix y = op(omega);
  if (y.rows() != d || y.cols() != l) throw ValidationError("operator returned a block of the wrong shape");

  Eigen::ColPivHouseholderQR<Matrix> qr(y);
  const double ymax = y.cwiseAbs().maxCoeff();
  Index rank = 0;
  if (ymax > 0.0) {
    qr.setThreshold(1e-13);
    rank = qr.rank();
  }
  const Matrix q = qr.householderQ() * Matrix::Identity(d, l);

  const Matrix hq = op(q);
  lr.operator_actions = 2 * l;
  const SortedEig eig = descending_eig(q.transpose() * hq);

  Index keep = k;
  if (rank < k) {
    keep = rank;
    lr.rank_deficient = true;
  }
  lr.u = q * eig.vectors.leftCols(keep);
  lr.eigenvalues = clamp_nonnegative(eig.values.head(keep));
  lr.trailing = clamp_nonnegative(eig.values.tail(l - keep));
  lr.trailing_kind = LowRankHessian::Trailing::estimate;
  return lr;
}

SymmetricOperator dense_operator(const Matrix& h) {
  return [h](const Matrix& x) -> Matrix { return h * x; };
}

Vector hd_action(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise, const Vector& z) {
  const Vector zw = noise.whiten(z);
  const Vector jt = lin.jacobian_transpose_action(zw);
  const Vector cov = prior.apply_covariance(jt);
  return noise.whiten(lin.jacobian_action(cov));
}

LowRankHessian build_lowrank(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise, Index k,
                             Index p, std::uint64_t seed) {
  const Index d = noise.size();
  SymmetricOperator op = [&](const Matrix& x) {
    Matrix out(d, x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = hd_action(lin, prior, noise, x.col(j));
    return out;
  };
  return randomized_eigs(op, d, k, p, seed);
}

LowRankHessian build_lowrank(const ForwardModel& model, const PriorOperator& prior, const NoiseModel& noise,
                             const Vector& m, Index k, Index p, std::uint64_t seed) {
  if (noise.size() != model.candidate_count()) throw ValidationError("noise model does not match candidate count");
  return build_lowrank(model.linearize(m), prior, noise, k, p, seed);
}

Matrix assemble_hd(const LinearizedModel& lin, const PriorOperator& prior, const NoiseModel& noise) {
  const Index d = noise.size();
  Matrix h(d, d);
  Vector e = Vector::Zero(d);
  for (Index j = 0; j < d; ++j) {
    e[j] = 1.0;
    h.col(j) = hd_action(lin, prior, noise, e);
    e[j] = 0.0;
  }
  return h;
}

LowRankHessian exact_lowrank(const Matrix& h, Index k) {
  if (h.rows() != h.cols()) throw ValidationError("exact_lowrank requires a square matrix");
  if (k < 0 || k > h.rows()) throw ValidationError("exact_lowrank: k out of range");
  const SortedEig eig = descending_eig(h);
  LowRankHessian lr;
  lr.u = eig.vectors.leftCols(k);
  lr.eigenvalues = clamp_nonnegative(eig.values.head(k));
  lr.trailing = clamp_nonnegative(eig.values.tail(h.rows() - k));
  lr.trailing_kind = LowRankHessian::Trailing::exact;
  return lr;
}

LowRankHessian truncate_adaptive(const LowRankHessian& lr, double ratio) {
  const Index k = lr.rank();
  if (k == 0) return lr;
  const double top = lr.eigenvalues[0];
  Index keep = k;
  for (Index i = 0; i + 1 < k; ++i) {
    if (lr.eigenvalues[i + 1] < ratio * top) {
      keep = i + 1;
      break;
    }
  }
  LowRankHessian out = lr;
  out.u = lr.u.leftCols(keep);
  out.eigenvalues = lr.eigenvalues.head(keep);
  out.trailing.resize(k - keep + lr.trailing.size());
  out.trailing << lr.eigenvalues.tail(k - keep), lr.trailing;
  return out;
}

namespace {

const char* role_name(LowRankHessian::Trailing t) {
  switch (t) {
    case LowRankHessian::Trailing::exact:
      return "trailing_exact";
    case LowRankHessian::Trailing::estimate:
      return "trailing_estimate";
    case LowRankHessian::Trailing::none:
      break;
  }
  return "trailing";
}

}  // namespace

void save_lowrank(const LowRankHessian& lr, const std::string& stem) {
  std::ofstream ev(stem + "_eigenvalues.csv");
  if (!ev) throw IoError("cannot write '" + stem + "_eigenvalues.csv'");
  ev << "# d=" << lr.dim() << " k=" << lr.rank() << " operator_actions=" << lr.operator_actions
     << " rank_deficient=" << (lr.rank_deficient ? 1 : 0) << '\n';
  ev << "index,eigenvalue,role\n";
  for (Index i = 0; i < lr.rank(); ++i) ev << i << ',' << csv::format(lr.eigenvalues[i]) << ",kept\n";
  for (Index i = 0; i < lr.trailing.size(); ++i) {
    ev << lr.rank() + i << ',' << csv::format(lr.trailing[i]) << ',' << role_name(lr.trailing_kind) << '\n';
  }

  std::ofstream uf(stem + "_U.csv");
  if (!uf) throw IoError("cannot write '" + stem + "_U.csv'");
  uf << "# column-major: one line per eigenvector, d=" << lr.dim() << '\n';
  for (Index j = 0; j < lr.rank(); ++j) {
    for (Index i = 0; i < lr.dim(); ++i) uf << (i ? "," : "") << csv::format(lr.u(i, j));
    uf << '\n';
  }
}

LowRankHessian load_lowrank(const std::string& stem) {
  const std::string ev_path = stem + "_eigenvalues.csv";
  const std::string u_path = stem + "_U.csv";
  std::ifstream ev(ev_path);
  if (!ev) throw IoError("missing low-rank artifact '" + ev_path + "'");

  LowRankHessian lr;
  Index d = -1;
  std::vector<double> kept, trailing;
  std::string line;
  while (std::getline(ev, line)) {
    if (line.rfind("#", 0) == 0) {
      long long dd = 0, kk = 0, acts = 0;
      int def = 0;
      if (std::sscanf(line.c_str(), "# d=%lld k=%lld operator_actions=%lld rank_deficient=%d", &dd, &kk, &acts,
                      &def) == 4) {
        d = Index(dd);
        lr.operator_actions = acts;
        lr.rank_deficient = def != 0;
      }
      continue;
    }
    if (line.rfind("index", 0) == 0 || line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw IoError(ev_path + ": malformed row");
    const double value = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const std::string role = line.substr(c2 + 1);
    if (role == "kept") {
      kept.push_back(value);
    } else {
      trailing.push_back(value);
      lr.trailing_kind = role == "trailing_exact" ? LowRankHessian::Trailing::exact : LowRankHessian::Trailing::estimate;
    }
  }
  if (d < 0) throw IoError(ev_path + ": missing dimension header");

  const auto rows = csv::read_numeric(u_path);
  if (rows.size() != kept.size()) throw IoError(u_path + ": column count does not match eigenvalues");
  lr.u.resize(d, Index(kept.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (Index(rows[j].size()) != d) throw IoError(u_path + ": eigenvector has wrong length");
    for (Index i = 0; i < d; ++i) lr.u(i, Index(j)) = rows[j][static_cast<std::size_t>(i)];
  }
  lr.eigenvalues = Eigen::Map<Vector>(kept.data(), Index(kept.size()));
  lr.trailing = Eigen::Map<Vector>(trailing.data(), Index(trailing.size()));
  return lr;
}

}  // namespace oed
