#include "oed/oed.h"

#include <cstring>
#include <string>

#include "oed/criteria.hpp"
#include "oed/errors.hpp"
#include "oed/pipeline.hpp"
#include "oed/selection.hpp"

struct oed_lowrank {
  oed::LowRankHessian lr;
};

namespace {

thread_local std::string g_last_error;

oed_status fail(oed_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
oed_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const oed::ValidationError& e) {
    return fail(OED_ERR_INVALID_ARGUMENT, e.what());
  } catch (const oed::NumericalError& e) {
    return fail(OED_ERR_NUMERICAL, e.what());
  } catch (const oed::CapabilityError& e) {
    return fail(OED_ERR_CAPABILITY, e.what());
  } catch (const oed::IoError& e) {
    return fail(OED_ERR_IO, e.what());
  } catch (const oed::StateError& e) {
    return fail(OED_ERR_STATE, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(OED_ERR_INVALID_ARGUMENT, std::string("JSON: ") + e.what());
  } catch (const std::exception& e) {
    return fail(OED_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(OED_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

using Stage = oed::StageResult (*)(const oed::RunConfig&);

oed_status run_stage(Stage stage, const char* config_path, const char* overrides_json, char** out) {
  return guarded([&] {
    if (!config_path || !out) return fail(OED_ERR_INVALID_ARGUMENT, "config_path and out must not be NULL");
    *out = nullptr;
    oed::Json overrides = oed::Json::object();
    if (overrides_json && *overrides_json) overrides = oed::Json::parse(overrides_json);
    const oed::RunConfig cfg = oed::parse_config(oed::load_config(config_path, overrides));
    const oed::StageResult res = stage(cfg);
    *out = copy_string(res.output.dump(2));
    if (!res.converged) return fail(OED_ERR_NOT_CONVERGED, "run finished without full convergence");
    return OED_OK;
  });
}

oed::Design make_design(const oed_lowrank* lr, const int64_t* indices, int64_t r) {
  if (r < 0 || (r > 0 && !indices)) throw oed::ValidationError("design indices missing");
  std::vector<oed::Index> idx(indices, indices + r);
  return oed::Design(std::move(idx), lr->lr.dim());
}

}  // namespace

extern "C" {

const char* oed_version(void) { return "1.0.0"; }

const char* oed_last_error(void) { return g_last_error.c_str(); }

const char* oed_status_string(oed_status status) {
  switch (status) {
    case OED_OK:
      return "ok";
    case OED_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case OED_ERR_NUMERICAL:
      return "numerical failure";
    case OED_ERR_CAPABILITY:
      return "capability exceeded";
    case OED_ERR_IO:
      return "I/O error";
    case OED_ERR_STATE:
      return "invalid state";
    case OED_ERR_NOT_CONVERGED:
      return "not converged";
    case OED_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

oed_status oed_run_offline(const char* config_path, const char* overrides_json, char** out) {
  return run_stage(&oed::run_offline, config_path, overrides_json, out);
}
oed_status oed_run_online(const char* config_path, const char* overrides_json, char** out) {
  return run_stage(&oed::run_online, config_path, overrides_json, out);
}
oed_status oed_run_evaluate(const char* config_path, const char* overrides_json, char** out) {
  return run_stage(&oed::run_evaluate, config_path, overrides_json, out);
}
oed_status oed_run_report(const char* config_path, const char* overrides_json, char** out) {
  return run_stage(&oed::run_report, config_path, overrides_json, out);
}

void oed_string_free(char* s) { std::free(s); }

oed_status oed_lowrank_load(const char* stem, oed_lowrank** out) {
  return guarded([&] {
    if (!stem || !out) return fail(OED_ERR_INVALID_ARGUMENT, "stem and out must not be NULL");
    *out = new oed_lowrank{oed::load_lowrank(stem)};
    return OED_OK;
  });
}

oed_status oed_lowrank_from_dense(const double* h, int64_t d, int64_t k, int64_t p, uint64_t seed,
                                  oed_lowrank** out) {
  return guarded([&] {
    if (!h || !out || d <= 0) return fail(OED_ERR_INVALID_ARGUMENT, "matrix pointer, out and d > 0 required");
    const oed::Matrix m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(h, d, d);
    if ((m - m.transpose()).norm() > 1e-10 * std::max(1.0, m.norm())) {
      return fail(OED_ERR_INVALID_ARGUMENT, "matrix is not symmetric");
    }
    *out = new oed_lowrank{oed::randomized_eigs(oed::dense_operator(m), d, k, p, seed)};
    return OED_OK;
  });
}

void oed_lowrank_free(oed_lowrank* lr) { delete lr; }

int64_t oed_lowrank_dim(const oed_lowrank* lr) { return lr ? lr->lr.dim() : -1; }

int64_t oed_lowrank_rank(const oed_lowrank* lr) { return lr ? lr->lr.rank() : -1; }

oed_status oed_lowrank_eigenvalues(const oed_lowrank* lr, double* out, int64_t capacity) {
  return guarded([&] {
    if (!lr || (!out && capacity > 0) || capacity < 0) return fail(OED_ERR_INVALID_ARGUMENT, "bad arguments");
    const int64_t n = std::min<int64_t>(capacity, lr->lr.rank());
    for (int64_t i = 0; i < n; ++i) out[i] = lr->lr.eigenvalues[i];
    return OED_OK;
  });
}

oed_status oed_lowrank_gap_bound(const oed_lowrank* lr, double* out) {
  return guarded([&] {
    if (!lr || !out) return fail(OED_ERR_INVALID_ARGUMENT, "handle and out must not be NULL");
    *out = oed::eig_gap_bound(lr->lr);
    return OED_OK;
  });
}

oed_status oed_lowrank_eig(const oed_lowrank* lr, const int64_t* indices, int64_t r, double* out) {
  return guarded([&] {
    if (!lr || !out) return fail(OED_ERR_INVALID_ARGUMENT, "handle and out must not be NULL");
    *out = oed::approx_eig_linear(lr->lr, make_design(lr, indices, r));
    return OED_OK;
  });
}

oed_status oed_lowrank_swapping_greedy(const oed_lowrank* lr, int64_t r, int max_sweeps, int64_t* indices,
                                       double* value) {
  return guarded([&] {
    if (!lr || (!indices && r > 0) || !value) return fail(OED_ERR_INVALID_ARGUMENT, "bad arguments");
    oed::SwapSettings s;
    s.max_sweeps = max_sweeps;
    const oed::SelectionResult res = oed::swapping_greedy(oed::lowrank_criterion(lr->lr), lr->lr.u, r, s);
    for (int64_t t = 0; t < r; ++t) indices[t] = res.design[t];
    *value = res.value;
    if (res.trace.hit_max_sweeps) return fail(OED_ERR_NOT_CONVERGED, "swapping greedy hit max_sweeps");
    return OED_OK;
  });
}

oed_status oed_lowrank_standard_greedy(const oed_lowrank* lr, int64_t r, int64_t* indices, double* value) {
  return guarded([&] {
    if (!lr || (!indices && r > 0) || !value) return fail(OED_ERR_INVALID_ARGUMENT, "bad arguments");
    const oed::SelectionResult res = oed::standard_greedy(oed::lowrank_criterion(lr->lr), lr->lr.dim(), r);
    for (int64_t t = 0; t < r; ++t) indices[t] = res.design[t];
    *value = res.value;
    return OED_OK;
  });
}

}  // extern "C"
