/* C interface to the sensor placement library. */
#ifndef OED_OED_H
#define OED_OED_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define OED_API __declspec(dllexport)
#else
#define OED_API __attribute__((visibility("default")))
#endif

typedef enum oed_status {
  OED_OK = 0,
  OED_ERR_INVALID_ARGUMENT = 1,
  OED_ERR_NUMERICAL = 2,
  OED_ERR_CAPABILITY = 3,
  OED_ERR_IO = 4,
  OED_ERR_STATE = 5,
  OED_ERR_NOT_CONVERGED = 6,
  OED_ERR_INTERNAL = 7
} oed_status;

typedef struct oed_lowrank oed_lowrank;

OED_API const char* oed_version(void);
/* Message of the last failed call on this thread; "" when none. */
OED_API const char* oed_last_error(void);
OED_API const char* oed_status_string(oed_status status);

/* Pipeline stages. `config_path` names a JSON config; `overrides_json` (may be
 * NULL) is merged on top. On OED_OK or OED_ERR_NOT_CONVERGED, *out receives a
 * JSON document owned by the caller (release with oed_string_free). */
OED_API oed_status oed_run_offline(const char* config_path, const char* overrides_json, char** out);
OED_API oed_status oed_run_online(const char* config_path, const char* overrides_json, char** out);
OED_API oed_status oed_run_evaluate(const char* config_path, const char* overrides_json, char** out);
OED_API oed_status oed_run_report(const char* config_path, const char* overrides_json, char** out);
OED_API void oed_string_free(char* s);

/* Low-rank data-space Hessian U_k diag(lambda) U_k^T. */
OED_API oed_status oed_lowrank_load(const char* stem, oed_lowrank** out);
/* Randomized eigendecomposition of a dense symmetric d x d matrix (row-major). */
OED_API oed_status oed_lowrank_from_dense(const double* h, int64_t d, int64_t k, int64_t p, uint64_t seed,
                                          oed_lowrank** out);
OED_API void oed_lowrank_free(oed_lowrank* lr);
OED_API int64_t oed_lowrank_dim(const oed_lowrank* lr);
OED_API int64_t oed_lowrank_rank(const oed_lowrank* lr);
/* Copies up to `capacity` leading eigenvalues into `out`. */
OED_API oed_status oed_lowrank_eigenvalues(const oed_lowrank* lr, double* out, int64_t capacity);
OED_API oed_status oed_lowrank_gap_bound(const oed_lowrank* lr, double* out);
/* Approximate EIG 1/2 logdet(I + W U Sigma U^T W^T) for the design `indices`. */
OED_API oed_status oed_lowrank_eig(const oed_lowrank* lr, const int64_t* indices, int64_t r, double* out);
/* Greedy selection of r sensors; writes r indices and the final criterion value. */
OED_API oed_status oed_lowrank_swapping_greedy(const oed_lowrank* lr, int64_t r, int max_sweeps, int64_t* indices,
                                               double* value);
OED_API oed_status oed_lowrank_standard_greedy(const oed_lowrank* lr, int64_t r, int64_t* indices, double* value);

#ifdef __cplusplus
}
#endif

#endif
