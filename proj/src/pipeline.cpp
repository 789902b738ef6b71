#include "oed/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "oed/criteria.hpp"
#include "oed/csv.hpp"
#include "oed/errors.hpp"
#include "oed/lognormal_diffusion.hpp"
#include "oed/selection.hpp"

namespace fs = std::filesystem;

namespace oed {

namespace {

// Seed streams derived from the config seed.
enum Stream : std::uint64_t {
  kTruth = 1,
  kTruthNoise = 2,
  kRandomDesigns = 3,
  kEvalDesigns = 4,
  kDlmc = 5,
  kVariance = 6,
  kSample = 1000,
  kSampleNoise = 100000,
  kLowrank = 200000,
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
auto tagged(const std::string& stage, F&& f) -> decltype(f()) {
  const std::string tag = stage + " stage: ";
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(tag + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(tag + e.what(), e.residual());
  } catch (const CapabilityError& e) {
    throw CapabilityError(tag + e.what());
  } catch (const StateError& e) {
    throw StateError(tag + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + e.what());
  }
}

template <typename F>
void parallel_for(Index n, int threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  const int count = int(std::min<Index>(threads, n));
  for (int t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- config

const std::vector<std::string> kTopLevelKeys = {
    "schema_version", "problem", "mode",    "output_dir", "grid",   "prior",       "candidates", "r",
    "samples",        "lowrank", "seed",    "noise",      "advection", "matrix_file", "newton",     "threads",
    "online",         "evaluate"};

void check_keys(const Json& obj, const std::vector<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T get(const Json& obj, const char* key, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

std::vector<double> number_list(const Json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be a list of numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ValidationError(std::string(what) + " must be a list of numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<Point> tensor_points(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::vector<Point> pts;
  for (double y : ys)
    for (double x : xs) pts.push_back({x, y});
  return pts;
}

std::vector<Point> parse_candidates(const Json& c, const std::string& problem) {
  if (c.is_null()) {
    if (problem == "lognormal-diffusion") return SensorArray::lattice(5, 5, 0.1, 0.9, 0.1, 0.9);
    return tensor_points({0.2, 0.55, 0.8}, {0.25, 0.5, 0.75});
  }
  check_keys(c, {"points", "xs", "ys", "lattice"}, "candidates");
  if (c.contains("points")) {
    std::vector<Point> pts;
    for (const auto& p : c.at("points")) {
      const auto xy = number_list(p, "candidate point");
      if (xy.size() != 2) throw ValidationError("candidate points must be [x, y] pairs");
      pts.push_back({xy[0], xy[1]});
    }
    return pts;
  }
  if (c.contains("xs") || c.contains("ys")) {
    if (!c.contains("xs") || !c.contains("ys")) throw ValidationError("candidates needs both xs and ys");
    return tensor_points(number_list(c.at("xs"), "candidates.xs"), number_list(c.at("ys"), "candidates.ys"));
  }
  if (c.contains("lattice")) {
    const Json& l = c.at("lattice");
    check_keys(l, {"gx", "gy", "x0", "x1", "y0", "y1"}, "candidates.lattice");
    return SensorArray::lattice(get<int>(l, "gx", 3), get<int>(l, "gy", 3), get<double>(l, "x0", 0.1),
                                get<double>(l, "x1", 0.9), get<double>(l, "y0", 0.1), get<double>(l, "y1", 0.9));
  }
  throw ValidationError("candidates needs points, xs/ys or lattice");
}

}  // namespace

Json load_config(const std::string& path, const Json& overrides) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  Json cfg;
  try {
    cfg = Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!overrides.is_null() && !overrides.empty()) cfg.merge_patch(overrides);
  return cfg;
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  Json* node = &config;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) (*node)[parts[i]] = Json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

RunConfig parse_config(const Json& j) {
  check_keys(j, kTopLevelKeys, "config");
  if (!j.contains("schema_version")) throw ValidationError("config is missing schema_version");
  if (get<int>(j, "schema_version", 0) != kConfigSchemaVersion) {
    throw ValidationError("unsupported config schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  RunConfig c;
  c.raw = j;
  c.problem = get<std::string>(j, "problem", c.problem);
  if (c.problem != "advection-diffusion" && c.problem != "lognormal-diffusion" && c.problem != "matrix-file") {
    throw ValidationError("unknown problem '" + c.problem + "'");
  }
  c.mode = get<std::string>(j, "mode", c.problem == "lognormal-diffusion" ? "la-prior-sample" : "linear-lowrank");
  if (c.mode != "linear-lowrank" && c.mode != "la-fixed-map" && c.mode != "la-prior-sample" && c.mode != "la-map") {
    throw ValidationError("unknown mode '" + c.mode + "'");
  }
  if (c.mode == "linear-lowrank" && c.problem == "lognormal-diffusion") {
    throw ValidationError("mode linear-lowrank requires a linear model or a matrix file");
  }
  if (c.mode != "linear-lowrank" && c.problem == "matrix-file") {
    throw ValidationError("mode " + c.mode + " needs a PDE model; matrix-file supports linear-lowrank only");
  }
  c.output_dir = get<std::string>(j, "output_dir", c.output_dir);

  if (j.contains("grid")) {
    check_keys(j.at("grid"), {"nx", "ny"}, "grid");
    c.nx = get<int>(j.at("grid"), "nx", c.nx);
    c.ny = get<int>(j.at("grid"), "ny", c.ny);
  }
  if (c.problem == "lognormal-diffusion") {
    c.prior = {0.04, 0.2, 2.0, 0.5, std::numbers::pi / 4.0, 0.0, std::nullopt};
  }
  if (j.contains("prior")) {
    const Json& p = j.at("prior");
    check_keys(p, {"gamma", "delta", "theta1", "theta2", "angle", "mean", "robin"}, "prior");
    c.prior.gamma = get<double>(p, "gamma", c.prior.gamma);
    c.prior.delta = get<double>(p, "delta", c.prior.delta);
    c.prior.theta1 = get<double>(p, "theta1", c.prior.theta1);
    c.prior.theta2 = get<double>(p, "theta2", c.prior.theta2);
    c.prior.angle = get<double>(p, "angle", c.prior.angle);
    c.prior.mean = get<double>(p, "mean", c.prior.mean);
    if (p.contains("robin") && !p.at("robin").is_null()) c.prior.robin = get<double>(p, "robin", 0.0);
  }
  c.candidates = parse_candidates(j.contains("candidates") ? j.at("candidates") : Json(), c.problem);

  c.r = get<Index>(j, "r", c.r);
  c.samples = get<Index>(j, "samples", c.samples);
  if (j.contains("lowrank")) {
    check_keys(j.at("lowrank"), {"k", "p", "adaptive"}, "lowrank");
    c.k = get<Index>(j.at("lowrank"), "k", c.k);
    c.p = get<Index>(j.at("lowrank"), "p", c.p);
    c.adaptive_k = get<bool>(j.at("lowrank"), "adaptive", c.adaptive_k);
  }
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("noise")) {
    check_keys(j.at("noise"), {"relative", "sigma"}, "noise");
    c.noise_relative = get<double>(j.at("noise"), "relative", c.noise_relative);
    if (j.at("noise").contains("sigma") && !j.at("noise").at("sigma").is_null()) {
      c.noise_sigma = get<double>(j.at("noise"), "sigma", 0.0);
    }
  }
  if (j.contains("advection")) {
    const Json& a = j.at("advection");
    check_keys(a, {"diffusion", "time_steps", "final_time", "observation_steps", "velocity_file"}, "advection");
    c.advection.diffusion = get<double>(a, "diffusion", c.advection.diffusion);
    c.advection.time_steps = get<int>(a, "time_steps", c.advection.time_steps);
    c.advection.final_time = get<double>(a, "final_time", c.advection.final_time);
    c.advection.observation_steps = get<std::vector<int>>(a, "observation_steps", {c.advection.time_steps});
    c.velocity_file = get<std::string>(a, "velocity_file", "");
  }
  c.matrix_file = get<std::string>(j, "matrix_file", "");
  if (c.problem == "matrix-file" && c.matrix_file.empty()) throw ValidationError("matrix-file problem needs matrix_file");
  if (!c.matrix_file.empty() && !fs::exists(c.matrix_file)) {
    throw ValidationError("matrix_file '" + c.matrix_file + "' does not exist");
  }
  if (!c.velocity_file.empty() && !fs::exists(c.velocity_file)) {
    throw ValidationError("velocity_file '" + c.velocity_file + "' does not exist");
  }
  if (j.contains("newton")) {
    const Json& n = j.at("newton");
    check_keys(n, {"max_newton", "grad_rtol", "cg_max", "armijo_c", "max_backtracks", "gauss_newton_iters"}, "newton");
    c.newton.max_newton = get<int>(n, "max_newton", c.newton.max_newton);
    c.newton.grad_rtol = get<double>(n, "grad_rtol", c.newton.grad_rtol);
    c.newton.cg_max = get<int>(n, "cg_max", c.newton.cg_max);
    c.newton.armijo_c = get<double>(n, "armijo_c", c.newton.armijo_c);
    c.newton.max_backtracks = get<int>(n, "max_backtracks", c.newton.max_backtracks);
    c.newton.gauss_newton_iters = get<int>(n, "gauss_newton_iters", c.newton.gauss_newton_iters);
  }
  c.newton.validate();
  c.threads = get<int>(j, "threads", c.threads);
  if (j.contains("online")) {
    const Json& o = j.at("online");
    check_keys(o, {"standard_greedy", "random_designs", "brute_force", "brute_force_limit", "max_sweeps", "leverage_init"},
               "online");
    c.online.standard_greedy = get<bool>(o, "standard_greedy", c.online.standard_greedy);
    c.online.random_designs = get<Index>(o, "random_designs", c.online.random_designs);
    c.online.brute_force = get<bool>(o, "brute_force", c.online.brute_force);
    c.online.brute_force_limit = get<long long>(o, "brute_force_limit", c.online.brute_force_limit);
    c.online.max_sweeps = get<int>(o, "max_sweeps", c.online.max_sweeps);
    c.online.leverage_init = get<std::string>(o, "leverage_init", c.online.leverage_init);
  }
  if (c.online.leverage_init != "summed-eigenvectors" && c.online.leverage_init != "summed-leverage") {
    throw ValidationError("online.leverage_init must be summed-eigenvectors or summed-leverage");
  }
  if (j.contains("evaluate")) {
    const Json& e = j.at("evaluate");
    check_keys(e, {"designs_file", "random_designs", "criteria", "dlmc_outer", "dlmc_inner",
                   "dlmc_max_forward_solves", "variance_fields", "variance_point"},
               "evaluate");
    c.evaluate.designs_file = get<std::string>(e, "designs_file", "");
    c.evaluate.random_designs = get<Index>(e, "random_designs", c.evaluate.random_designs);
    c.evaluate.criteria = get<std::vector<std::string>>(e, "criteria", c.evaluate.criteria);
    c.evaluate.dlmc_outer = get<Index>(e, "dlmc_outer", c.evaluate.dlmc_outer);
    c.evaluate.dlmc_inner = get<Index>(e, "dlmc_inner", c.evaluate.dlmc_inner);
    c.evaluate.dlmc_max_forward_solves = get<long long>(e, "dlmc_max_forward_solves", c.evaluate.dlmc_max_forward_solves);
    c.evaluate.variance_fields = get<bool>(e, "variance_fields", c.evaluate.variance_fields);
    c.evaluate.variance_point = get<std::string>(e, "variance_point", c.evaluate.variance_point);
  }
  for (const auto& name : c.evaluate.criteria) {
    const EigMode m = eig_mode_from_string(name);
    if (c.problem == "matrix-file" && m != EigMode::linear_lowrank && m != EigMode::linear_exact) {
      throw CapabilityError("criterion " + name + " needs a PDE model");
    }
  }
  if (c.evaluate.variance_point != "prior-mean" && c.evaluate.variance_point != "truth") {
    throw ValidationError("evaluate.variance_point must be prior-mean or truth");
  }
  if (c.nx <= 0 || c.ny <= 0) throw ValidationError("grid sizes must be positive");
  if (c.r < 0) throw ValidationError("r must be non-negative");
  if (c.samples <= 0) throw ValidationError("samples must be positive");
  if (c.k < 0 || c.p < 0) throw ValidationError("lowrank k and p must be non-negative");
  if (!(c.noise_relative > 0.0)) throw ValidationError("noise.relative must be positive");
  if (c.noise_sigma && !(*c.noise_sigma > 0.0)) throw ValidationError("noise.sigma must be positive");
  if (c.threads <= 0) throw ValidationError("threads must be positive");
  return c;
}

namespace {

// ---------------------------------------------------------------- problem

struct Problem {
  std::unique_ptr<Grid2D> grid;
  std::unique_ptr<ForwardModel> model;
  std::unique_ptr<PriorOperator> prior;
  NoiseModel noise;
  Vector m_true;
  Matrix hessian;  // matrix-file only
  Index d = 0;

  bool matrix() const { return !model; }
};

Problem build_problem(const RunConfig& c) {
  Problem pb;
  if (c.problem == "matrix-file") {
    const auto rows = csv::read_numeric(c.matrix_file);
    const Index d = Index(rows.size());
    pb.hessian.resize(d, d);
    for (Index i = 0; i < d; ++i) {
      if (Index(rows[static_cast<std::size_t>(i)].size()) != d) throw ValidationError("matrix_file must be square");
      for (Index j = 0; j < d; ++j) pb.hessian(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    if ((pb.hessian - pb.hessian.transpose()).norm() > 1e-10 * std::max(1.0, pb.hessian.norm())) {
      throw ValidationError("matrix_file Hessian is not symmetric");
    }
    pb.d = d;
  } else {
    pb.grid = std::make_unique<Grid2D>(c.nx, c.ny);
    PriorParameters pp;
    pp.gamma = c.prior.gamma;
    pp.delta = c.prior.delta;
    pp.theta = anisotropy_tensor(c.prior.theta1, c.prior.theta2, c.prior.angle);
    pp.robin = c.prior.robin;
    pb.prior = std::make_unique<PriorOperator>(*pb.grid, pp, Vector::Constant(pb.grid->vertex_count(), c.prior.mean));
    if (c.problem == "advection-diffusion") {
      VelocityField v = c.velocity_file.empty() ? VelocityField::analytic(*pb.grid)
                                                : VelocityField::from_csv(*pb.grid, c.velocity_file);
      pb.model = std::make_unique<AdvectionDiffusionModel>(*pb.grid, std::move(v), c.candidates, c.advection);
      pb.m_true = gaussian_blob_initial_condition(*pb.grid);
    } else {
      pb.model = std::make_unique<LogNormalDiffusionModel>(*pb.grid, c.candidates);
      pb.m_true = pb.prior->sample(derive_seed(c.seed, kTruth));
    }
    pb.d = pb.model->candidate_count();
    double sigma = 0.0;
    if (c.noise_sigma) {
      sigma = *c.noise_sigma;
    } else {
      sigma = c.noise_relative * pb.model->forward_map(pb.m_true).cwiseAbs().maxCoeff();
    }
    if (!(sigma > 0.0)) throw ValidationError("noise level is zero: the true observations vanish");
    pb.noise = NoiseModel::uniform(pb.d, sigma);
  }
  if (c.r > pb.d) {
    throw ValidationError("r = " + std::to_string(c.r) + " exceeds the candidate count d = " + std::to_string(pb.d));
  }
  if (c.k + c.p > pb.d) {
    throw ValidationError("k + p = " + std::to_string(c.k + c.p) + " exceeds d = " + std::to_string(pb.d));
  }
  return pb;
}

// With adaptive k the build at k is truncated to the smallest rank with
// lambda_{k+1} / lambda_1 < 1e-6.
LowRankHessian finish(LowRankHessian lr, const RunConfig& c) {
  return c.adaptive_k ? truncate_adaptive(lr, 1e-6) : lr;
}

LowRankHessian linear_lowrank(const Problem& pb, const RunConfig& c) {
  if (pb.matrix()) {
    return finish(randomized_eigs(dense_operator(pb.hessian), pb.d, c.k, c.p, derive_seed(c.seed, kLowrank)), c);
  }
  return finish(build_lowrank(*pb.model, *pb.prior, pb.noise, pb.prior->mean(), c.k, c.p, derive_seed(c.seed, kLowrank)),
                c);
}

struct OfflineSample {
  TrainingSample ts;
  bool converged = true;
  int newton_iters = 0;
  long long cg_iters = 0;
};

OfflineSample build_sample(const Problem& pb, const RunConfig& c, Index i, bool fixed_map) {
  OfflineSample s;
  const PriorOperator& prior = *pb.prior;
  s.ts.parameter = prior.sample(derive_seed(c.seed, kSample + std::uint64_t(i)));
  const Vector f = pb.model->forward_map(s.ts.parameter);
  std::mt19937_64 rng(derive_seed(c.seed, kSampleNoise + std::uint64_t(i)));
  std::normal_distribution<double> normal(0.0, 1.0);
  s.ts.data = f;
  for (Index j = 0; j < pb.d; ++j) s.ts.data[j] += pb.noise.sigma()[j] * normal(rng);
  s.ts.reference = s.ts.parameter;
  if (fixed_map) {
    const MapResult mr = find_map(*pb.model, prior, pb.noise, s.ts.data, Design::all(pb.d), c.newton);
    s.ts.reference = mr.m_map;
    s.converged = mr.converged;
    s.newton_iters = mr.newton_iters;
    s.cg_iters = mr.total_cg_iters;
  }
  s.ts.lowrank = finish(
      build_lowrank(*pb.model, prior, pb.noise, s.ts.reference, c.k, c.p, derive_seed(c.seed, kLowrank + std::uint64_t(i))),
      c);
  s.ts.prior_term = 0.5 * prior.norm_sq(s.ts.reference - prior.mean());
  return s;
}

std::vector<OfflineSample> build_samples(const Problem& pb, const RunConfig& c, bool fixed_map) {
  std::vector<OfflineSample> out(static_cast<std::size_t>(c.samples));
  parallel_for(c.samples, c.threads, [&](Index i) { out[static_cast<std::size_t>(i)] = build_sample(pb, c, i, fixed_map); });
  return out;
}

// LA-EIG with a MAP point per design and sample. Counts its operator actions.
class LaMapEvaluator {
 public:
  LaMapEvaluator(const Problem& pb, const RunConfig& c, std::vector<Vector> data)
      : pb_(pb), c_(c), data_(std::move(data)) {}

  double operator()(const Design& w) {
    if (w.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const MapResult mr = find_map(*pb_.model, *pb_.prior, pb_.noise, w.select(data_[i]), w, c_.newton);
      if (!mr.converged) converged_ = false;
      const LowRankHessian lr = finish(build_lowrank(*pb_.model, *pb_.prior, pb_.noise, mr.m_map, c_.k, c_.p,
                                                     derive_seed(c_.seed, kLowrank + i)),
                                       c_);
      actions_ += mr.total_cg_iters + lr.operator_actions;
      ++map_solves_;
      total += 0.5 * laplace_information(restricted_eigenvalues(lr, w)) +
               0.5 * pb_.prior->norm_sq(mr.m_map - pb_.prior->mean());
    }
    return total / double(data_.size());
  }

  long long actions() const { return actions_; }
  long long map_solves() const { return map_solves_; }
  bool converged() const { return converged_; }

 private:
  const Problem& pb_;
  const RunConfig& c_;
  std::vector<Vector> data_;
  long long actions_ = 0;
  long long map_solves_ = 0;
  bool converged_ = true;
};

// ---------------------------------------------------------------- artifacts

fs::path lowrank_stem(const fs::path& dir, Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%03lld", static_cast<long long>(i));
  return dir / "lowrank" / buf;
}

fs::path sample_stem(const fs::path& dir, Index i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%03lld", static_cast<long long>(i));
  return dir / "samples" / buf;
}

void write_vector_csv(const fs::path& path, const Vector& v, const char* column) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << "index," << column << '\n';
  for (Index i = 0; i < v.size(); ++i) os << i << ',' << csv::format(v[i]) << '\n';
}

Vector read_vector_csv(const fs::path& path) {
  const auto rows = csv::read_numeric(path.string());
  Vector v(Index(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw IoError(path.string() + ": expected index,value rows");
    v[Index(i)] = rows[i][1];
  }
  return v;
}

Json design_json(const Design& w) { return Json(w.indices()); }

Json read_manifest(const RunConfig& c) {
  const fs::path path = fs::path(c.output_dir) / "manifest.json";
  std::ifstream is(path);
  if (!is) {
    throw IoError("no offline artifacts at '" + path.string() + "': run the offline stage first");
  }
  return Json::parse(is);
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

}  // namespace

// ---------------------------------------------------------------- stages

StageResult run_offline(const RunConfig& c) {
  return tagged("offline", [&] {
    const auto t0 = Clock::now();
    const Problem pb = build_problem(c);
    const fs::path dir(c.output_dir);
    fs::create_directories(dir / "lowrank");

    Json manifest;
    manifest["schema_version"] = kConfigSchemaVersion;
    manifest["config"] = c.raw;
    manifest["problem"] = c.problem;
    manifest["mode"] = c.mode;
    manifest["d"] = pb.d;
    manifest["parameter_dim"] = pb.matrix() ? 0 : pb.prior->dim();
    manifest["sigma"] = pb.matrix() ? 0.0 : pb.noise.sigma()[0];

    long long lowrank_actions = 0;
    long long map_actions = 0;
    long long map_solves = 0;
    bool converged = true;
    Json samples = Json::array();

    if (c.mode == "linear-lowrank") {
      if (!pb.matrix() && !pb.model->is_linear()) throw ValidationError("linear-lowrank mode requires a linear model");
      const LowRankHessian lr = linear_lowrank(pb, c);
      save_lowrank(lr, lowrank_stem(dir, 0).string());
      lowrank_actions += lr.operator_actions;
      samples.push_back({{"id", 0}, {"lowrank", lowrank_stem(dir, 0).filename().string()}, {"prior_term", 0.0},
                         {"rank_deficient", lr.rank_deficient}});
    } else {
      fs::create_directories(dir / "samples");
      const bool fixed_map = c.mode == "la-fixed-map";
      const std::vector<OfflineSample> built = build_samples(pb, c, fixed_map);
      for (std::size_t i = 0; i < built.size(); ++i) {
        const OfflineSample& s = built[i];
        const Index id = Index(i);
        save_lowrank(s.ts.lowrank, lowrank_stem(dir, id).string());
        const std::string stem = sample_stem(dir, id).string();
        write_field_csv(stem + "_parameter.csv", *pb.grid, s.ts.parameter);
        write_field_csv(stem + "_reference.csv", *pb.grid, s.ts.reference);
        write_vector_csv(stem + "_data.csv", s.ts.data, "value");
        lowrank_actions += s.ts.lowrank.operator_actions;
        map_actions += s.cg_iters;
        if (fixed_map) ++map_solves;
        converged = converged && s.converged;
        samples.push_back({{"id", id},
                           {"lowrank", lowrank_stem(dir, id).filename().string()},
                           {"prior_term", s.ts.prior_term},
                           {"rank_deficient", s.ts.lowrank.rank_deficient},
                           {"map_converged", s.converged},
                           {"newton_iters", s.newton_iters},
                           {"cg_iters", s.cg_iters}});
      }
    }
    manifest["samples"] = samples;
    Json counters;
    counters["lowrank_operator_actions"] = lowrank_actions;
    counters["map_hessian_actions"] = map_actions;
    counters["offline_operator_actions"] = lowrank_actions + map_actions;
    counters["map_solves"] = map_solves;
    counters["forward_solves"] = pb.matrix() ? 0 : pb.model->solves().forward.load();
    counters["incremental_solves"] = pb.matrix() ? 0 : pb.model->solves().incremental.load();
    manifest["counters"] = counters;
    manifest["converged"] = converged;
    manifest["wall_time_s"] = seconds_since(t0);
    write_json(dir / "manifest.json", manifest);
    return StageResult{manifest, converged};
  });
}

namespace {

struct Artifacts {
  Json manifest;
  std::vector<TrainingSample> samples;  // lowrank and prior term; parameter/data for la-map
};

Artifacts load_artifacts(const RunConfig& c) {
  Artifacts a;
  a.manifest = read_manifest(c);
  if (a.manifest.value("mode", std::string()) != c.mode) {
    throw StateError("offline artifacts were built for mode " + a.manifest.value("mode", std::string("?")) +
                     ", config asks for " + c.mode + ": rerun the offline stage");
  }
  const fs::path dir(c.output_dir);
  for (const auto& s : a.manifest.at("samples")) {
    TrainingSample ts;
    ts.lowrank = load_lowrank((dir / "lowrank" / s.at("lowrank").get<std::string>()).string());
    ts.prior_term = s.at("prior_term").get<double>();
    if (c.mode == "la-map") ts.data = read_vector_csv(sample_stem(dir, s.at("id").get<Index>()).string() + "_data.csv");
    a.samples.push_back(std::move(ts));
  }
  if (a.samples.empty()) throw StateError("offline manifest lists no samples: rerun the offline stage");
  return a;
}

Json selection_json(const SelectionResult& s) {
  return {{"design", design_json(s.design)},
          {"value", s.value},
          {"sweeps", s.trace.sweeps},
          {"hit_max_sweeps", s.trace.hit_max_sweeps},
          {"evaluations", s.trace.evaluations}};
}

}  // namespace

StageResult run_online(const RunConfig& c) {
  return tagged("online", [&] {
    const auto t0 = Clock::now();
    const Artifacts art = load_artifacts(c);
    const Index d = art.manifest.at("d").get<Index>();
    if (c.r > d) throw ValidationError("r exceeds the candidate count d = " + std::to_string(d));
    const fs::path dir(c.output_dir);

    std::unique_ptr<Problem> pb;
    std::shared_ptr<LaMapEvaluator> la_map;
    std::optional<Criterion> criterion;
    if (c.mode == "linear-lowrank") {
      criterion = lowrank_criterion(art.samples.front().lowrank);
    } else if (c.mode == "la-map") {
      pb = std::make_unique<Problem>(build_problem(c));
      std::vector<Vector> data;
      for (const auto& s : art.samples) data.push_back(s.data);
      la_map = std::make_shared<LaMapEvaluator>(*pb, c, std::move(data));
      criterion = Criterion([la_map](const Design& w) { return (*la_map)(w); });
    } else {
      auto shared = std::make_shared<const std::vector<TrainingSample>>(art.samples);
      criterion = la_criterion(shared, c.mode == "la-fixed-map" ? LaMode::fixed_map : LaMode::prior_sample, false);
    }

    std::vector<LowRankHessian> lowranks;
    for (const auto& s : art.samples) lowranks.push_back(s.lowrank);
    Vector scores;
    if (lowranks.size() == 1) {
      scores = leverage_scores(lowranks.front().u);
    } else if (c.online.leverage_init == "summed-leverage") {
      scores = summed_leverage_scores(lowranks);
    } else {
      scores = leverage_scores(summed_eigenvectors(lowranks));
    }

    SwapSettings swap;
    swap.max_sweeps = c.online.max_sweeps;
    const SelectionResult swapping = swapping_greedy(*criterion, top_leverage_design(scores, c.r), swap);
    write_selection_trace_csv((dir / "swapping_trace.csv").string(), swapping.trace);

    Json report;
    report["schema_version"] = kConfigSchemaVersion;
    report["problem"] = c.problem;
    report["mode"] = c.mode;
    report["d"] = d;
    report["r"] = c.r;
    report["swapping"] = selection_json(swapping);
    report["leverage_scores"] = std::vector<double>(scores.data(), scores.data() + scores.size());

    std::optional<SelectionResult> standard;
    if (c.online.standard_greedy) {
      standard = standard_greedy(*criterion, d, c.r);
      write_selection_trace_csv((dir / "standard_trace.csv").string(), standard->trace);
      report["standard"] = selection_json(*standard);
    }
    if (c.online.random_designs > 0) {
      const auto designs = random_designs(d, c.r, c.online.random_designs, derive_seed(c.seed, kRandomDesigns));
      std::vector<double> values;
      for (const auto& w : designs) values.push_back((*criterion)(w));
      const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
      double mean = 0.0;
      for (double v : values) mean += v;
      report["random"] = {{"count", values.size()},
                          {"max", *mx},
                          {"min", *mn},
                          {"mean", mean / double(values.size())},
                          {"swapping_beats_all", swapping.value > *mx}};
    }
    if (c.online.brute_force && c.mode != "la-map" && binomial(d, c.r) <= c.online.brute_force_limit) {
      const auto ranking = brute_force(*criterion, d, c.r, c.online.brute_force_limit);
      Json bf;
      bf["count"] = ranking.size();
      bf["best_design"] = design_json(ranking.front().design);
      bf["best_value"] = ranking.front().value;
      Json top = Json::array();
      for (std::size_t i = 0; i < std::min<std::size_t>(5, ranking.size()); ++i) {
        top.push_back({{"design", design_json(ranking[i].design)}, {"value", ranking[i].value}});
      }
      bf["top"] = top;
      report["swapping"]["brute_force_rank"] = rank_of(ranking, swapping.design);
      if (standard) report["standard"]["brute_force_rank"] = rank_of(ranking, standard->design);
      report["brute_force"] = bf;
    }

    if (c.mode == "linear-lowrank") {
      const LowRankHessian& lr = art.samples.front().lowrank;
      const char* kind = lr.trailing_kind == LowRankHessian::Trailing::exact ? "certified" : "estimate";
      report["gap_bound"] = {{"value", eig_gap_bound(lr)}, {"kind", kind}};
    } else {
      report["gap_bound"] = nullptr;
    }
    Json spectra = Json::array();
    for (const auto& lr : lowranks) {
      spectra.push_back(std::vector<double>(lr.eigenvalues.data(), lr.eigenvalues.data() + lr.eigenvalues.size()));
    }
    report["spectra"] = spectra;

    Json counters = art.manifest.at("counters");
    counters["online_operator_actions"] = la_map ? la_map->actions() : 0;
    counters["online_map_solves"] = la_map ? la_map->map_solves() : 0;
    counters["criterion_evaluations"] = criterion->evaluations();
    report["counters"] = counters;
    const bool offline_ok = art.manifest.value("converged", true);
    const bool converged = offline_ok && !swapping.trace.hit_max_sweeps && (!la_map || la_map->converged());
    report["converged"] = converged;
    report["wall_time_s"] = {{"offline", art.manifest.value("wall_time_s", 0.0)}, {"online", seconds_since(t0)}};
    write_json(dir / "report.json", report);
    return StageResult{report, converged};
  });
}

namespace {

std::vector<Design> read_designs(const std::string& path, Index d) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open designs file '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  std::vector<Design> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    for (const auto& row : Json::parse(text)) out.emplace_back(row.get<std::vector<Index>>(), d);
    return out;
  }
  std::stringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::stringstream ls(line);
    std::vector<Index> idx;
    Index v;
    while (ls >> v) idx.push_back(v);
    out.emplace_back(std::move(idx), d);
  }
  return out;
}

std::string joined(const Design& w) {
  std::string s;
  for (Index t = 0; t < w.size(); ++t) s += (t ? " " : "") + std::to_string(w[t]);
  return s;
}

}  // namespace

StageResult run_evaluate(const RunConfig& c) {
  return tagged("evaluate", [&] {
    const auto t0 = Clock::now();
    const Problem pb = build_problem(c);
    const fs::path dir(c.output_dir);
    fs::create_directories(dir);

    std::vector<Design> designs;
    if (!c.evaluate.designs_file.empty()) designs = read_designs(c.evaluate.designs_file, pb.d);
    if (c.evaluate.random_designs > 0) {
      const auto extra = random_designs(pb.d, c.r, c.evaluate.random_designs, derive_seed(c.seed, kEvalDesigns));
      designs.insert(designs.end(), extra.begin(), extra.end());
    }

    bool converged = true;
    long long actions = 0;
    long long map_solves = 0;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> values;
    for (const std::string& name : c.evaluate.criteria) {
      const EigMode mode = eig_mode_from_string(name);
      std::vector<double> col;
      col.reserve(designs.size());
      switch (mode) {
        case EigMode::linear_lowrank: {
          const LowRankHessian lr = linear_lowrank(pb, c);
          actions += lr.operator_actions;
          for (const auto& w : designs) col.push_back(approx_eig_linear(lr, w));
          break;
        }
        case EigMode::linear_exact: {
          if (pb.matrix()) {
            const LowRankHessian full = exact_lowrank(pb.hessian, pb.d);
            for (const auto& w : designs) col.push_back(approx_eig_linear(full, w));
          } else {
            const LinearizedModel lin = pb.model->linearize(pb.prior->mean());
            for (const auto& w : designs) {
              col.push_back(exact_eig_linear(lin, *pb.prior, pb.noise, w));
              actions += w.size();
            }
          }
          break;
        }
        case EigMode::la_prior_sample:
        case EigMode::la_fixed_map: {
          const bool fixed = mode == EigMode::la_fixed_map;
          const auto built = build_samples(pb, c, fixed);
          std::vector<TrainingSample> samples;
          for (const auto& s : built) {
            samples.push_back(s.ts);
            actions += s.ts.lowrank.operator_actions + s.cg_iters;
            converged = converged && s.converged;
            if (fixed) ++map_solves;
          }
          for (const auto& w : designs) {
            col.push_back(la_eig(samples, w, fixed ? LaMode::fixed_map : LaMode::prior_sample));
          }
          break;
        }
        case EigMode::la_map: {
          const auto built = build_samples(pb, c, false);
          std::vector<Vector> data;
          for (const auto& s : built) {
            data.push_back(s.ts.data);
            actions += s.ts.lowrank.operator_actions;
          }
          LaMapEvaluator eval(pb, c, std::move(data));
          for (const auto& w : designs) col.push_back(eval(w));
          actions += eval.actions();
          map_solves += eval.map_solves();
          converged = converged && eval.converged();
          break;
        }
        case EigMode::dlmc: {
          const long long solves = c.evaluate.dlmc_outer + c.evaluate.dlmc_inner;
          if (solves > c.evaluate.dlmc_max_forward_solves) {
            throw CapabilityError("DLMC needs " + std::to_string(solves) + " forward solves, budget is " +
                                  std::to_string(c.evaluate.dlmc_max_forward_solves));
          }
          const DlmcEstimator est(*pb.model, *pb.prior, pb.noise, c.evaluate.dlmc_outer, c.evaluate.dlmc_inner,
                                  derive_seed(c.seed, kDlmc));
          for (const auto& w : designs) col.push_back(est.evaluate(w));
          break;
        }
      }
      columns.push_back(name);
      values.push_back(std::move(col));
    }

    const bool variance = c.evaluate.variance_fields && !pb.matrix();
    std::vector<double> mean_variance;
    if (variance) {
      const Vector point = c.evaluate.variance_point == "truth" ? pb.m_true : pb.prior->mean();
      const LinearizedModel lin = pb.model->linearize(point);
      const Vector prior_var = pb.prior->covariance_diagonal();
      const Vector weights = lumped_mass(*pb.grid);
      fs::create_directories(dir / "variance");
      write_field_csv((dir / "variance" / "prior.csv").string(), *pb.grid, prior_var);
      for (std::size_t i = 0; i < designs.size(); ++i) {
        const Vector var = posterior_pointwise_variance(*pb.prior, prior_var, lin, pb.noise, designs[i], std::nullopt,
                                                        derive_seed(c.seed, kVariance));
        mean_variance.push_back(weights.dot(var) / weights.sum());
        write_field_csv((dir / "variance" / ("design_" + std::to_string(i) + ".csv")).string(), *pb.grid, var);
      }
      columns.push_back("mean_variance");
      values.push_back(mean_variance);
    }

    const fs::path csv_path = dir / "evaluation.csv";
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot write '" + csv_path.string() + "'");
    os << "design_id,indices";
    for (const auto& name : columns) os << ',' << name;
    os << '\n';
    for (std::size_t i = 0; i < designs.size(); ++i) {
      os << i << ',' << joined(designs[i]);
      for (const auto& col : values) os << ',' << csv::format(col[i]);
      os << '\n';
    }

    Json out;
    out["schema_version"] = kConfigSchemaVersion;
    out["csv"] = csv_path.string();
    out["designs"] = designs.size();
    out["columns"] = columns;
    out["counters"] = {{"operator_actions", actions},
                       {"map_solves", map_solves},
                       {"forward_solves", pb.matrix() ? 0 : pb.model->solves().forward.load()}};
    out["converged"] = converged;
    out["wall_time_s"] = seconds_since(t0);
    return StageResult{out, converged};
  });
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("pearson needs two equal-length series (n >= 2)");
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

StageResult run_report(const RunConfig& c) {
  return tagged("report", [&] {
    const fs::path dir(c.output_dir);
    const fs::path report_path = dir / "report.json";
    const fs::path csv_path = dir / "evaluation.csv";
    const bool have_report = fs::exists(report_path);
    const bool have_csv = fs::exists(csv_path);
    if (!have_report && !have_csv) {
      throw StateError("nothing to report in '" + dir.string() + "': run the online or evaluate stage first");
    }
    Json out;
    out["schema_version"] = kConfigSchemaVersion;
    bool converged = true;
    if (have_report) {
      std::ifstream is(report_path);
      const Json rep = Json::parse(is);
      Json summary;
      for (const char* key : {"problem", "mode", "d", "r", "swapping", "standard", "random", "gap_bound", "counters"}) {
        if (rep.contains(key)) summary[key] = rep.at(key);
      }
      if (rep.contains("brute_force")) {
        summary["brute_force_best"] = rep.at("brute_force").at("best_value");
      }
      out["online"] = summary;
      converged = rep.value("converged", true);
    }
    if (have_csv) {
      std::ifstream is(csv_path);
      std::string header;
      std::getline(is, header);
      std::vector<std::string> names;
      {
        std::stringstream hs(header);
        std::string cell;
        while (std::getline(hs, cell, ',')) names.push_back(cell);
      }
      if (names.size() < 2 || names[0] != "design_id") throw IoError(csv_path.string() + ": unexpected header");
      const std::size_t ncols = names.size() - 2;
      std::vector<std::vector<double>> cols(ncols);
      std::string line;
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        std::getline(ls, cell, ',');
        for (std::size_t k = 0; k < ncols; ++k) {
          if (!std::getline(ls, cell, ',')) throw IoError(csv_path.string() + ": short row");
          cols[k].push_back(std::stod(cell));
        }
      }
      Json ev;
      ev["designs"] = ncols ? cols[0].size() : 0;
      Json stats = Json::object();
      for (std::size_t k = 0; k < ncols; ++k) {
        const auto& v = cols[k];
        if (v.empty()) continue;
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        stats[names[k + 2]] = {{"min", *mn}, {"max", *mx}};
      }
      ev["columns"] = stats;
      Json corr = Json::array();
      for (std::size_t a = 0; a < ncols; ++a) {
        for (std::size_t b = a + 1; b < ncols; ++b) {
          if (cols[a].size() < 2) continue;
          corr.push_back({{"a", names[a + 2]}, {"b", names[b + 2]}, {"pearson", pearson(cols[a], cols[b])}});
        }
      }
      ev["correlations"] = corr;
      out["evaluation"] = ev;
    }
    out["converged"] = converged;
    return StageResult{out, converged};
  });
}

}  // namespace oed
