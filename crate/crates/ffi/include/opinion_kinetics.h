#ifndef OPINION_KINETICS_H
#define OPINION_KINETICS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum KodStatus {
  KOD_STATUS_OK = 0,
  KOD_STATUS_NULL_POINTER = 1,
  KOD_STATUS_INVALID_ARGUMENT = 2,
  KOD_STATUS_BUFFER_TOO_SMALL = 3,
  KOD_STATUS_TIME_STEP_TOO_LARGE = 4,
  KOD_STATUS_NEGATIVE_DENSITY = 5,
  KOD_STATUS_UNSUPPORTED = 6,
  KOD_STATUS_CONFIG = 7,
  KOD_STATUS_IO = 8,
  KOD_STATUS_NUMERICAL = 9,
  KOD_STATUS_PANIC = 10,
} KodStatus;

/**
 * Opinion profile family for [`kod_g_inf`].
 */
typedef enum KodProfile {
  /**
   * H = 1, D = 1 - w^2.
   */
  KOD_PROFILE_CASE1 = 1,
  /**
   * H = 1 - w^2, D = 1 - w^2.
   */
  KOD_PROFILE_CASE2 = 2,
} KodProfile;

/**
 * A validated experiment configuration.
 */
typedef struct KodExperiment KodExperiment;

/**
 * A Fokker-Planck solver together with its current density.
 */
typedef struct KodSimulation KodSimulation;

/**
 * Outcome of [`kod_experiment_run`].
 */
typedef struct KodRunSummary {
  uint64_t steps;
  double t;
  /**
   * NaN when the experiment has no reference solution.
   */
  double final_l1_error;
  double final_mean_opinion;
  double final_gamma;
  double wall_time_s;
} KodRunSummary;

/**
 * Scalar observables of a density.
 */
typedef struct KodObservables {
  double t;
  double mass;
  double gamma;
  double mean_opinion;
  double min_f;
  uint64_t steps;
} KodObservables;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message of this thread, without the terminator.
 */
size_t kod_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL terminated, truncated to `len - 1` bytes).
 * Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t kod_last_error_message(char *buf, size_t len);

/**
 * Truncated stationary degree law rho_inf(c), c = 0..=c_max, into `out[0..=c_max]`.
 * With `normalized` set the values are rescaled to sum one.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum KodStatus kod_rho_inf(double gamma,
                           double alpha,
                           size_t c_max,
                           bool normalized,
                           double *out,
                           size_t len);

/**
 * Stationary opinion profile on the N-cell grid (N + 1 nodes), unit discrete mass.
 * `profile` takes a [`KodProfile`] value.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum KodStatus kod_g_inf(double kappa,
                         double mbar,
                         double sigma2,
                         int32_t profile,
                         size_t n,
                         double *out,
                         size_t len);

/**
 * Parses a TOML experiment description.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` a writable handle slot.
 */
enum KodStatus kod_experiment_from_toml(const char *toml, struct KodExperiment **out);

/**
 * Loads a named preset (test1, test3, test4, fig1; test2 needs rates and is only
 * available through TOML).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` a writable handle slot.
 */
enum KodStatus kod_experiment_from_preset(const char *name, struct KodExperiment **out);

/**
 * Sets the directory the run writes into.
 *
 * # Safety
 * `exp` must come from a `kod_experiment_from_*` call; `dir` must be NUL terminated.
 */
enum KodStatus kod_experiment_set_out_dir(struct KodExperiment *exp, const char *dir);

/**
 * Sets the seed of the Monte Carlo streams.
 *
 * # Safety
 * `exp` must come from a `kod_experiment_from_*` call.
 */
enum KodStatus kod_experiment_set_seed(struct KodExperiment *exp, uint64_t seed);

/**
 * Runs the experiment, writing its artifacts to the output directory.
 *
 * # Safety
 * `exp` must come from a `kod_experiment_from_*` call; `summary` may be null.
 */
enum KodStatus kod_experiment_run(const struct KodExperiment *exp, struct KodRunSummary *summary);

/**
 * # Safety
 * `exp` must be null or come from a `kod_experiment_from_*` call, and not be used afterwards.
 */
void kod_experiment_free(struct KodExperiment *exp);

/**
 * Builds the Fokker-Planck solver and initial density of an experiment.
 *
 * # Safety
 * `exp` must come from a `kod_experiment_from_*` call; `out` a writable handle slot.
 */
enum KodStatus kod_simulation_new(const struct KodExperiment *exp, struct KodSimulation **out);

/**
 * One IMEX step. `dt <= 0` uses the experiment's time-step policy; the step taken is
 * stored in `dt_taken` when it is not null.
 *
 * # Safety
 * `sim` must come from [`kod_simulation_new`].
 */
enum KodStatus kod_simulation_step(struct KodSimulation *sim, double dt, double *dt_taken);

/**
 * Number of opinion nodes (N + 1) and connectivity levels (c_max + 1).
 *
 * # Safety
 * `sim` must come from [`kod_simulation_new`]; the outputs must be writable.
 */
enum KodStatus kod_simulation_shape(const struct KodSimulation *sim, size_t *nodes, size_t *levels);

/**
 * Copies f(w_i, c) row-major over (i, c).
 *
 * # Safety
 * `sim` must come from [`kod_simulation_new`]; `out` must point to `len` writable doubles.
 */
enum KodStatus kod_simulation_density(const struct KodSimulation *sim, double *out, size_t len);

/**
 * # Safety
 * `sim` must come from [`kod_simulation_new`]; `out` must be writable.
 */
enum KodStatus kod_simulation_observables(const struct KodSimulation *sim,
                                          struct KodObservables *out);

/**
 * # Safety
 * `sim` must be null or come from [`kod_simulation_new`], and not be used afterwards.
 */
void kod_simulation_free(struct KodSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPINION_KINETICS_H */
