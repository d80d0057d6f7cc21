#ifndef FLOWSUPER_H
#define FLOWSUPER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FS_API __declspec(dllexport)
#else
#define FS_API __attribute__((visibility("default")))
#endif

/* Status codes. Every function returning int returns one of these. */
enum {
  FS_OK = 0,
  FS_ERR_SHAPE_MISMATCH = 1,
  FS_ERR_BOUND_VIOLATION = 2,
  FS_ERR_NEGATIVE_SIGMA = 3,
  FS_ERR_INFEASIBLE_LAW = 4,
  FS_ERR_NON_FINITE = 5,
  FS_ERR_NOT_AFFINE = 6,
  FS_ERR_EMPTY_INITIAL = 7,
  FS_ERR_POPULATION_EXPLOSION = 8,
  FS_ERR_INSUFFICIENT_REPLICATES = 9,
  FS_ERR_DIMENSION_MISMATCH = 10,
  FS_ERR_LEVEL_TOO_LOW = 11,
  FS_ERR_UNSUPPORTED_ORDER = 12,
  FS_ERR_NOT_CLOSED_FORM = 13,
  FS_ERR_BAD_TIME_ORDER = 14,
  FS_ERR_PARSE = 15,
  FS_ERR_UNKNOWN_KEY = 16,
  FS_ERR_VALIDATION = 17,
  FS_ERR_IO = 18,
  FS_ERR_UNSUPPORTED = 19,
  FS_ERR_INVALID_ARGUMENT = 90,
  FS_ERR_INTERNAL = 99
};

/* A parsed and validated scenario config. */
typedef struct fs_scenario fs_scenario;

FS_API int fs_scenario_load(const char* path, fs_scenario** out);
FS_API int fs_scenario_from_json(const char* text, fs_scenario** out);
FS_API void fs_scenario_free(fs_scenario* scenario);

FS_API int fs_scenario_set_seed(fs_scenario* scenario, uint64_t seed);
FS_API int fs_scenario_set_replicates(fs_scenario* scenario, uint64_t replicates);
FS_API int fs_scenario_seed(const fs_scenario* scenario, uint64_t* out);

/* Writes the 16 hex digit config hash and a terminating NUL (17 bytes). */
FS_API int fs_scenario_hash(const fs_scenario* scenario, char* buffer, size_t size);

/* Canonical JSON. *needed receives the byte count including the NUL; the
   text is written only when size is large enough. */
FS_API int fs_scenario_serialize(const fs_scenario* scenario, char* buffer, size_t size, size_t* needed);

/* Worker threads for Monte Carlo loops; 0 restores the default. */
FS_API int fs_set_threads(unsigned threads);

FS_API int fs_run_simulate(const fs_scenario* scenario, const char* out_dir);
FS_API int fs_run_dual(const fs_scenario* scenario, const char* out_dir);
FS_API int fs_run_moments(const fs_scenario* scenario, const char* out_dir);
/* *all_passed is 1 when every check passed, else 0. */
FS_API int fs_run_verify(const fs_scenario* scenario, const char* out_dir, int* all_passed);

/* Three-point offspring law. support and probs need room for 3 entries. */
FS_API int fs_offspring_law(double mean, double variance, int* support, double* probs, int* count);

/* E exp(-rho X_t(1)) for constant gamma, sigma and initial mass x. */
FS_API int fs_mass_laplace(double rho, double t, double gamma, double sigma, double initial_mass, double* out);

/* Message of the last failure on the calling thread; empty after success. */
FS_API const char* fs_last_error(void);
FS_API const char* fs_error_name(int code);
FS_API const char* fs_version(void);

#ifdef __cplusplus
}
#endif

#endif
