#ifndef DELTA_SIM_H
#define DELTA_SIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_UTF8 = 2,
  DS_STATUS_CONFIG = 3,
  DS_STATUS_NON_CONVERGENCE = 4,
  DS_STATUS_IO = 5,
  DS_STATUS_PANIC = 6,
} DsStatus;

typedef enum {
  DS_SWEEP_SWEEP2D = 0,
  DS_SWEEP_MW_SWEEP = 1,
  DS_SWEEP_OPT_SWEEP = 2,
} DsSweep;

/**
 * Validated run configuration.
 */
typedef struct DsConfig DsConfig;

/**
 * Converged operating point.
 */
typedef struct DsSolution DsSolution;

/**
 * Intracavity amplitudes, `√photons`.
 */
typedef struct {
  double b_re;
  double b_im;
  double a_re;
  double a_im;
} DsFields;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a JSON config file, or a bundled preset by name.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
DsStatus ds_config_load(const char *path, DsConfig **out);

/**
 * Parses a JSON config from memory.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
DsStatus ds_config_from_json(const char *json, DsConfig **out);

/**
 * Applies one `key=value` override. On error the config is unchanged.
 *
 * # Safety
 * `config` must come from `ds_config_*` and `item` be NUL-terminated.
 */
DsStatus ds_config_override(DsConfig *config, const char *item);

/**
 * Writes the hex config hash into `buf`; returns the size needed.
 *
 * # Safety
 * `config` must be valid; `buf` must hold `len` bytes or be null.
 */
size_t ds_config_hash(const DsConfig *config, char *buf, size_t len);

/**
 * # Safety
 * `config` must come from `ds_config_*` and not be used afterwards.
 */
void ds_config_free(DsConfig *config);

/**
 * Solves the configured operating point.
 *
 * # Safety
 * `config` must be valid and `out` a writable pointer.
 */
DsStatus ds_solve(const DsConfig *config, DsSolution **out);

/**
 * Conversion efficiency; NaN for a null handle.
 *
 * # Safety
 * `solution` must come from `ds_solve` or be null.
 */
double ds_solution_eta(const DsSolution *solution);

/**
 * Signal-mode absorption rate in Hz; NaN for a null handle.
 *
 * # Safety
 * `solution` must come from `ds_solve` or be null.
 */
double ds_solution_kappa_abs(const DsSolution *solution);

/**
 * # Safety
 * `solution` must come from `ds_solve` and `out` be writable.
 */
DsStatus ds_solution_fields(const DsSolution *solution, DsFields *out);

/**
 * Fixed-point iterations used; 0 for a null handle.
 *
 * # Safety
 * `solution` must come from `ds_solve` or be null.
 */
size_t ds_solution_iterations(const DsSolution *solution);

/**
 * Last relative field update; NaN for a null handle.
 *
 * # Safety
 * `solution` must come from `ds_solve` or be null.
 */
double ds_solution_residual(const DsSolution *solution);

/**
 * # Safety
 * `solution` must come from `ds_solve` and not be used afterwards.
 */
void ds_solution_free(DsSolution *solution);

/**
 * Runs one of the configured sweeps and writes its CSV to `path`.
 * Returns `NonConvergence` after writing if any cell failed.
 *
 * # Safety
 * `config` must be valid and `path` NUL-terminated.
 */
DsStatus ds_run_sweep(const DsConfig *config, DsSweep kind, const char *path);

/**
 * Copies the calling thread's last error message into `buf`; returns the
 * size needed including the NUL.
 *
 * # Safety
 * `buf` must hold `len` bytes or be null.
 */
size_t ds_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DELTA_SIM_H */
