#include "oed/selection.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "oed/csv.hpp"
#include "oed/errors.hpp"

namespace oed {

Criterion::Criterion(Function fn) : fn_(std::move(fn)), count_(std::make_shared<std::atomic<long long>>(0)) {
  if (!fn_) throw ValidationError("criterion function is empty");
}

double Criterion::operator()(const Design& design) const {
  ++*count_;
  return fn_(design);
}

Criterion lowrank_criterion(LowRankHessian lr) {
  auto shared = std::make_shared<const LowRankHessian>(std::move(lr));
  return Criterion([shared](const Design& w) { return approx_eig_linear(*shared, w); });
}

Criterion la_criterion(std::shared_ptr<const std::vector<TrainingSample>> samples, LaMode mode, bool reduced) {
  if (!samples || samples->empty()) throw ValidationError("la_criterion requires training samples");
  return Criterion([samples, mode, reduced](const Design& w) { return la_eig(*samples, w, mode, reduced); });
}

Vector leverage_scores(const Matrix& u) { return u.rowwise().squaredNorm(); }

Design top_leverage_design(const Vector& scores, Index r) {
  const Index d = scores.size();
  if (r < 0 || r > d) throw ValidationError("r out of range for leverage initialization");
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  order.resize(static_cast<std::size_t>(r));
  return Design(order, d);
}

Matrix summed_eigenvectors(std::span<const LowRankHessian> lowranks) {
  if (lowranks.empty()) throw ValidationError("no low-rank factors to sum");
  const Index d = lowranks.front().dim();
  Index kmax = 0;
  for (const auto& lr : lowranks) {
    if (lr.dim() != d) throw ValidationError("low-rank factors disagree on d");
    kmax = std::max(kmax, lr.rank());
  }
  Matrix sum = Matrix::Zero(d, kmax);
  for (const auto& lr : lowranks) sum.leftCols(lr.rank()) += lr.u;
  return sum;
}

Vector summed_leverage_scores(std::span<const LowRankHessian> lowranks) {
  if (lowranks.empty()) throw ValidationError("no low-rank factors to sum");
  Vector s = Vector::Zero(lowranks.front().dim());
  for (const auto& lr : lowranks) {
    if (lr.dim() != s.size()) throw ValidationError("low-rank factors disagree on d");
    s += leverage_scores(lr.u);
  }
  return s;
}

SelectionResult standard_greedy(const Criterion& criterion, Index d, Index r) {
  if (r < 0 || r > d) throw ValidationError("standard_greedy: r must lie in [0, d]");
  const long long before = criterion.evaluations();
  SelectionResult out;
  out.design = Design::empty(d);
  for (Index t = 0; t < r; ++t) {
    Index best = -1;
    double best_value = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (out.design.contains(j)) continue;
      const double v = criterion(out.design.with(j));
      if (best < 0 || v > best_value) {
        best = j;
        best_value = v;
      }
    }
    out.design = out.design.with(best);
    out.value = best_value;
    out.trace.steps.push_back({0, t, best, best_value});
  }
  if (r == 0) out.value = 0.0;
  out.trace.evaluations = criterion.evaluations() - before;
  return out;
}

SelectionResult swapping_greedy(const Criterion& criterion, const Design& init, const SwapSettings& settings) {
  if (settings.max_sweeps <= 0) throw ValidationError("max_sweeps must be positive");
  const long long before = criterion.evaluations();
  const Index d = init.candidates();
  const Index r = init.size();
  SelectionResult out;
  out.design = init;
  out.value = criterion(init);

  bool changed = true;
  while (changed && out.trace.sweeps < settings.max_sweeps) {
    changed = false;
    ++out.trace.sweeps;
    for (Index t = 0; t < r; ++t) {
      Index best = -1;
      double best_value = 0.0;
      for (Index j = 0; j < d; ++j) {
        if (out.design.contains(j)) continue;
        const double v = criterion(out.design.replaced(t, j));
        if (best < 0 || v > best_value) {
          best = j;
          best_value = v;
        }
      }
      if (best >= 0 && best_value > out.value + settings.min_improvement) {
        out.design = out.design.replaced(t, best);
        out.value = best_value;
        changed = true;
        out.trace.steps.push_back({out.trace.sweeps, t, best, best_value});
      }
    }
  }
  out.trace.hit_max_sweeps = changed;
  out.trace.evaluations = criterion.evaluations() - before;
  return out;
}

SelectionResult swapping_greedy(const Criterion& criterion, const Matrix& u_init, Index r,
                                const SwapSettings& settings) {
  return swapping_greedy(criterion, top_leverage_design(leverage_scores(u_init), r), settings);
}

long long binomial(Index n, Index k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long double c = 1.0L;
  for (Index i = 1; i <= k; ++i) c = c * (long double)(n - k + i) / (long double)i;
  if (c > 9.0e18L) return std::numeric_limits<long long>::max();
  return (long long)(c + 0.5L);
}

std::vector<RankedDesign> brute_force(const Criterion& criterion, Index d, Index r, long long limit) {
  if (r < 0 || r > d) throw ValidationError("brute_force: r must lie in [0, d]");
  const long long count = binomial(d, r);
  if (count > limit) {
    throw CapabilityError("brute_force: C(" + std::to_string(d) + ", " + std::to_string(r) + ") = " +
                          std::to_string(count) + " designs exceeds the limit of " + std::to_string(limit));
  }
  std::vector<RankedDesign> all;
  all.reserve(static_cast<std::size_t>(count));
  std::vector<Index> idx(static_cast<std::size_t>(r));
  std::iota(idx.begin(), idx.end(), Index(0));
  while (true) {
    Design w(idx, d);
    const double v = criterion(w);
    all.push_back({std::move(w), v});
    Index i = r - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == d - r + i) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < r; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  std::stable_sort(all.begin(), all.end(), [](const RankedDesign& a, const RankedDesign& b) { return a.value > b.value; });
  return all;
}

Index rank_of(const std::vector<RankedDesign>& ranking, const Design& design) {
  const Design key = design.sorted();
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (ranking[i].design.sorted() == key) return Index(i + 1);
  }
  throw ValidationError("design " + design.to_string() + " is not in the ranking");
}

std::vector<Design> random_designs(Index d, Index r, Index count, std::uint64_t seed, bool unique) {
  if (r < 0 || r > d) throw ValidationError("random_designs: r must lie in [0, d]");
  if (count < 0) throw ValidationError("random_designs: negative count");
  if (unique && binomial(d, r) < count) throw ValidationError("random_designs: fewer distinct designs than requested");
  std::mt19937_64 rng(seed);
  std::vector<Design> out;
  std::set<std::vector<Index>> seen;
  std::vector<Index> pool(static_cast<std::size_t>(d));
  while (Index(out.size()) < count) {
    std::iota(pool.begin(), pool.end(), Index(0));
    for (Index t = 0; t < r; ++t) {
      std::uniform_int_distribution<Index> pick(t, d - 1);
      std::swap(pool[static_cast<std::size_t>(t)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<Index> chosen(pool.begin(), pool.begin() + r);
    if (unique) {
      std::vector<Index> key = chosen;
      std::sort(key.begin(), key.end());
      if (!seen.insert(key).second) continue;
    }
    out.emplace_back(std::move(chosen), d);
  }
  return out;
}

void write_selection_trace_csv(const std::string& path, const SelectionTrace& trace) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path + "'");
  os << "# sweeps=" << trace.sweeps << " hit_max_sweeps=" << (trace.hit_max_sweeps ? 1 : 0)
     << " evaluations=" << trace.evaluations << '\n';
  os << "sweep,position,candidate,value\n";
  for (const SelectionStep& s : trace.steps) {
    os << s.sweep << ',' << s.position << ',' << s.candidate << ',' << csv::format(s.value) << '\n';
  }
}

}  // namespace oed
