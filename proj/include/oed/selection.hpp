#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oed/criteria.hpp"

namespace oed {

// Design objective with an evaluation counter. Copies share the counter.
// The wrapped function must be deterministic and safe to call concurrently.
class Criterion {
 public:
  using Function = std::function<double(const Design&)>;

  explicit Criterion(Function fn);

  double operator()(const Design& design) const;
  long long evaluations() const noexcept { return count_->load(); }
  void reset_count() const noexcept { count_->store(0); }

 private:
  Function fn_;
  std::shared_ptr<std::atomic<long long>> count_;
};

// Psi-hat over a copy of the low-rank factors.
Criterion lowrank_criterion(LowRankHessian lr);
// LA-EIG (or the reduced criterion) over shared training samples.
Criterion la_criterion(std::shared_ptr<const std::vector<TrainingSample>> samples, LaMode mode, bool reduced);

struct SelectionStep {
  int sweep = 0;        // 0 for standard greedy
  Index position = 0;   // step (standard) or swapped position (swapping)
  Index candidate = 0;  // sensor chosen at that step / position
  double value = 0.0;   // criterion after the step
};

struct SelectionTrace {
  std::vector<SelectionStep> steps;
  int sweeps = 0;
  bool hit_max_sweeps = false;
  long long evaluations = 0;
};

struct SelectionResult {
  Design design;
  double value = 0.0;
  SelectionTrace trace;
};

// l_i = ||row i of U||^2.
Vector leverage_scores(const Matrix& u);
// Top-r scores, ties by lowest index, ordered by descending score.
Design top_leverage_design(const Vector& scores, Index r);
// Entrywise sum of the U_k^i, narrower factors zero-padded on the right.
Matrix summed_eigenvectors(std::span<const LowRankHessian> lowranks);
// Sum over samples of the per-sample leverage scores (sign-invariant alternative).
Vector summed_leverage_scores(std::span<const LowRankHessian> lowranks);

// Adds the best candidate r times starting from the empty design.
// Uses exactly sum_{t=1}^{r} (d - t + 1) evaluations.
SelectionResult standard_greedy(const Criterion& criterion, Index d, Index r);

struct SwapSettings {
  int max_sweeps = 10;
  double min_improvement = 1e-12;
};

// Sweeps positions t = 0..r-1 replacing s_t by the best of {s_t} and the
// unselected candidates; swaps need a strict improvement. Stops after a sweep
// without changes or at max_sweeps (flagged in the trace).
SelectionResult swapping_greedy(const Criterion& criterion, const Design& init, const SwapSettings& settings = {});
// Same, initialized from the leverage scores of u_init (d x k).
SelectionResult swapping_greedy(const Criterion& criterion, const Matrix& u_init, Index r,
                                const SwapSettings& settings = {});

struct RankedDesign {
  Design design;
  double value = 0.0;
};

// All C(d, r) designs in ascending index order, sorted by descending value
// (lexicographic order among ties). CapabilityError above `limit` designs.
std::vector<RankedDesign> brute_force(const Criterion& criterion, Index d, Index r, long long limit = 1000000);
// 1-based position of the design's index set in a brute-force ranking.
Index rank_of(const std::vector<RankedDesign>& ranking, const Design& design);
long long binomial(Index n, Index k);

// Uniform r-subsets of [0, d), deterministic per seed. With unique = true no
// index set repeats.
std::vector<Design> random_designs(Index d, Index r, Index count, std::uint64_t seed, bool unique = false);

// sweep,position,candidate,value
void write_selection_trace_csv(const std::string& path, const SelectionTrace& trace);

}  // namespace oed
