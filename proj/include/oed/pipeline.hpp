#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oed/advection_diffusion.hpp"
#include "oed/map_solver.hpp"
#include "oed/mesh.hpp"

namespace oed {

inline constexpr int kConfigSchemaVersion = 1;

using Json = nlohmann::json;

// Reads a JSON config file and merges `overrides` on top (RFC 7386 merge patch).
Json load_config(const std::string& path, const Json& overrides = Json::object());
// Applies "a.b.c=value" to a config tree. The value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(Json& config, const std::string& assignment);

struct PriorConfig {
  double gamma = 1.0;
  double delta = 8.0;
  double theta1 = 1.0;
  double theta2 = 1.0;
  double angle = 0.0;
  double mean = 0.25;
  std::optional<double> robin;
};

struct OnlineConfig {
  bool standard_greedy = true;
  Index random_designs = 200;
  bool brute_force = true;
  long long brute_force_limit = 200000;
  int max_sweeps = 10;
  std::string leverage_init = "summed-eigenvectors";  // or "summed-leverage"
};

struct EvaluateConfig {
  std::string designs_file;  // JSON list of index lists, or one design per line
  Index random_designs = 0;
  std::vector<std::string> criteria{"linear-lowrank"};
  Index dlmc_outer = 200;
  Index dlmc_inner = 200;
  long long dlmc_max_forward_solves = 20000;
  bool variance_fields = false;
  std::string variance_point = "prior-mean";  // or "truth"
};

struct RunConfig {
  Json raw;
  std::string problem = "advection-diffusion";  // advection-diffusion | lognormal-diffusion | matrix-file
  std::string mode = "linear-lowrank";          // linear-lowrank | la-fixed-map | la-prior-sample | la-map
  std::string output_dir = "oed_out";
  int nx = 32;
  int ny = 32;
  PriorConfig prior;
  std::vector<Point> candidates;
  Index r = 3;
  Index samples = 1;
  Index k = 9;
  Index p = 0;
  bool adaptive_k = false;  // truncate at lambda_{k+1} / lambda_1 < 1e-6
  std::uint64_t seed = 1;
  double noise_relative = 0.01;
  std::optional<double> noise_sigma;
  AdvectionDiffusionSettings advection;
  std::string velocity_file;
  std::string matrix_file;
  NewtonSettings newton;
  int threads = 1;
  OnlineConfig online;
  EvaluateConfig evaluate;
};

// Validates the schema version and fills defaults (problem-specific prior
// defaults included). Throws ValidationError.
RunConfig parse_config(const Json& config);

// Each stage returns its JSON output; `converged` is false when any Newton
// solve or swapping sweep limit was hit.
struct StageResult {
  Json output;
  bool converged = true;
};

StageResult run_offline(const RunConfig& config);
StageResult run_online(const RunConfig& config);
StageResult run_evaluate(const RunConfig& config);
StageResult run_report(const RunConfig& config);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace oed
