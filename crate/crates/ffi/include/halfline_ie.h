#ifndef HALFLINE_IE_H
#define HALFLINE_IE_H

#pragma once

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum HlieStatus {
    HLIE_STATUS_OK = 0,
    HLIE_STATUS_NULL_POINTER = 1,
    HLIE_STATUS_INVALID_UTF8 = 2,
    HLIE_STATUS_INVALID_CONFIG = 3,
    HLIE_STATUS_INVALID_PARAMETER = 4,
    HLIE_STATUS_NO_CONVERGENCE = 5,
    HLIE_STATUS_INADMISSIBLE = 6,
    HLIE_STATUS_BUFFER_TOO_SMALL = 7,
    HLIE_STATUS_INDEX_OUT_OF_RANGE = 8,
    HLIE_STATUS_IO = 9,
    HLIE_STATUS_PANIC = 10,
} HlieStatus;

/*
 Profiles held by an [`HlieNonlinear`].
 */
typedef enum HlieNonlinearField {
    HLIE_NONLINEAR_FIELD_X = 0,
    HLIE_NONLINEAR_FIELD_F = 1,
    HLIE_NONLINEAR_FIELD_PHI = 2,
    HLIE_NONLINEAR_FIELD_B = 3,
    HLIE_NONLINEAR_FIELD_CHI = 4,
} HlieNonlinearField;

/*
 Profiles held by an [`HlieQuasilinear`] for a single `γ`.
 */
typedef enum HlieQuasilinearField {
    HLIE_QUASILINEAR_FIELD_X = 0,
    HLIE_QUASILINEAR_FIELD_F = 1,
    HLIE_QUASILINEAR_FIELD_GAMMA_X = 2,
    HLIE_QUASILINEAR_FIELD_PSI = 3,
    HLIE_QUASILINEAR_FIELD_G = 4,
    HLIE_QUASILINEAR_FIELD_H = 5,
} HlieQuasilinearField;

/*
 Parsed and validated run configuration.
 */
typedef struct HlieConfig HlieConfig;

/*
 Converged `B` together with `F`, `Φ` and `χ`.
 */
typedef struct HlieNonlinear HlieNonlinear;

/*
 One converged `f_γ` per configured `γ`, sharing `ψ`, `g` and `H`.
 */
typedef struct HlieQuasilinear HlieQuasilinear;

/*
 Characteristic constants. `sigma0`, `k_rate` and `c_bound` are NaN until
 `χ` has been computed.
 */
typedef struct HlieConstants {
    double m;
    double xi;
    double eta;
    double epsilon0;
    double sigma0;
    double k_rate;
    double c_bound;
} HlieConstants;

/*
 Scalar outcomes of a nonlinear solve. Absent quantities are NaN.
 */
typedef struct HlieNonlinearStats {
    size_t iterations_b;
    size_t iterations_f;
    size_t iterations_phi;
    double residual;
    double lower_margin;
    double upper_margin;
    double xi_margin;
    double fitted_rate;
    double envelope_ratio;
} HlieNonlinearStats;

/*
 Scalar outcomes of one quasilinear solve.
 */
typedef struct HlieQuasilinearStats {
    double gamma;
    size_t iterations;
    double residual;
    double lower_margin;
    double upper_margin;
    double slope_point;
    double slope_estimate;
} HlieQuasilinearStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *hlie_version(void);

/*
 Message of the most recent failure on this thread, or NULL when the last
 call succeeded. The pointer stays valid until the next call into the
 library from the same thread.
 */
const char *hlie_last_error(void);

/*
 Parses a TOML configuration.

 # Safety
 `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HlieStatus hlie_config_from_toml(const char *toml, struct HlieConfig **out);

/*
 Overrides the output directory of a configuration.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `dir` must be a
 NUL-terminated string.
 */
enum HlieStatus hlie_config_set_output(struct HlieConfig *cfg, const char *dir);

/*
 Number of grid nodes of a configuration.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
 */
enum HlieStatus hlie_config_grid_len(const struct HlieConfig *cfg, size_t *out);

/*
 SHA-256 digest of the configuration, as a NUL-terminated hex string of 64
 characters written into `out` (capacity `len`, at least 65).

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `out` must point to `len`
 writable bytes.
 */
enum HlieStatus hlie_config_hash(const struct HlieConfig *cfg, char *out, size_t len);

/*
 `M`, `η`, `ξ` and `ε₀` of the nonlinear problem described by `cfg`,
 without solving it.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
 */
enum HlieStatus hlie_config_constants(const struct HlieConfig *cfg, struct HlieConstants *out);

/*
 Releases a configuration. NULL is ignored.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`] and not be used afterwards.
 */
void hlie_config_free(struct HlieConfig *cfg);

/*
 Runs a CLI subcommand (`validate`, `solve-quasilinear`, `solve-nonlinear`
 or `report`), writing artifacts to the configured output directory. The
 report JSON is returned in `report_json` (release with
 [`hlie_string_free`]) and `all_passed` tells whether every check passed.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `command` must be a
 NUL-terminated string; `report_json` and `all_passed` must be writable.
 */
enum HlieStatus hlie_run(const struct HlieConfig *cfg,
                         const char *command,
                         char **report_json,
                         bool *all_passed);

/*
 Releases a string returned by the library. NULL is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void hlie_string_free(char *s);

/*
 Solves the nonlinear equation described by `cfg`.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
 */
enum HlieStatus hlie_solve_nonlinear(const struct HlieConfig *cfg, struct HlieNonlinear **out);

/*
 Number of grid nodes of a nonlinear solution.

 # Safety
 `sol` must come from [`hlie_solve_nonlinear`]; `out` must be writable.
 */
enum HlieStatus hlie_nonlinear_len(const struct HlieNonlinear *sol, size_t *out);

/*
 Copies one profile of a nonlinear solution into `out` (capacity `len`).

 # Safety
 `sol` must come from [`hlie_solve_nonlinear`]; `out` must point to `len`
 writable doubles.
 */
enum HlieStatus hlie_nonlinear_copy(const struct HlieNonlinear *sol,
                                    enum HlieNonlinearField field,
                                    double *out,
                                    size_t len);

/*
 Constants of a nonlinear solution, including `σ₀`, `k` and `C`.

 # Safety
 `sol` must come from [`hlie_solve_nonlinear`]; `out` must be writable.
 */
enum HlieStatus hlie_nonlinear_constants(const struct HlieNonlinear *sol,
                                         struct HlieConstants *out);

/*
 Iteration counts, residual, margins and rate diagnostics of a nonlinear
 solution.

 # Safety
 `sol` must come from [`hlie_solve_nonlinear`]; `out` must be writable.
 */
enum HlieStatus hlie_nonlinear_stats(const struct HlieNonlinear *sol,
                                     struct HlieNonlinearStats *out);

/*
 Releases a nonlinear solution. NULL is ignored.

 # Safety
 `sol` must come from [`hlie_solve_nonlinear`] and not be used afterwards.
 */
void hlie_nonlinear_free(struct HlieNonlinear *sol);

/*
 Solves the quasilinear equation for every `γ` of `cfg`.

 # Safety
 `cfg` must come from [`hlie_config_from_toml`]; `out` must be writable.
 */
enum HlieStatus hlie_solve_quasilinear(const struct HlieConfig *cfg, struct HlieQuasilinear **out);

/*
 Number of `γ` values solved.

 # Safety
 `sol` must come from [`hlie_solve_quasilinear`]; `out` must be writable.
 */
enum HlieStatus hlie_quasilinear_count(const struct HlieQuasilinear *sol, size_t *out);

/*
 Number of grid nodes of a quasilinear solution.

 # Safety
 `sol` must come from [`hlie_solve_quasilinear`]; `out` must be writable.
 */
enum HlieStatus hlie_quasilinear_len(const struct HlieQuasilinear *sol, size_t *out);

/*
 Copies one profile of the `index`-th quasilinear solution into `out`
 (capacity `len`).

 # Safety
 `sol` must come from [`hlie_solve_quasilinear`]; `out` must point to
 `len` writable doubles.
 */
enum HlieStatus hlie_quasilinear_copy(const struct HlieQuasilinear *sol,
                                      size_t index,
                                      enum HlieQuasilinearField field,
                                      double *out,
                                      size_t len);

/*
 Scalar outcomes of the `index`-th quasilinear solution.

 # Safety
 `sol` must come from [`hlie_solve_quasilinear`]; `out` must be writable.
 */
enum HlieStatus hlie_quasilinear_stats(const struct HlieQuasilinear *sol,
                                       size_t index,
                                       struct HlieQuasilinearStats *out);

/*
 Releases a quasilinear solution. NULL is ignored.

 # Safety
 `sol` must come from [`hlie_solve_quasilinear`] and not be used
 afterwards.
 */
void hlie_quasilinear_free(struct HlieQuasilinear *sol);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HALFLINE_IE_H */
