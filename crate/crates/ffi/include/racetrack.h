#ifndef RACETRACK_H
#define RACETRACK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result of every fallible call.
 */
typedef enum RacetrackStatus {
  RACETRACK_STATUS_OK = 0,
  /*
   A required pointer argument was NULL.
   */
  RACETRACK_STATUS_NULL_POINTER = 1,
  /*
   A parameter or size violated its documented bounds.
   */
  RACETRACK_STATUS_CONFIG = 2,
  /*
   A numerical procedure failed (non-convergence, non-finite values, ...).
   */
  RACETRACK_STATUS_NUMERICAL = 3,
  /*
   An output buffer has the wrong length.
   */
  RACETRACK_STATUS_BUFFER_SIZE = 4,
  /*
   An internal error; the library state is unchanged.
   */
  RACETRACK_STATUS_PANIC = 5,
} RacetrackStatus;

/*
 Opaque discretized circle.
 */
typedef struct RacetrackGrid RacetrackGrid;

/*
 Opaque equilibrium solver bound to one grid and parameter set.
 */
typedef struct RacetrackSolver RacetrackSolver;

/*
 Model parameters, passed by value.
 */
typedef struct RacetrackParams {
  double mu;
  double sigma;
  double eta;
  double tau_a;
  double tau_m;
  double rho;
  double gamma;
} RacetrackParams;

/*
 Growth rate of one Fourier mode of the uniform state and its parts.
 */
typedef struct RacetrackSpectral {
  int64_t n;
  double h_alpha;
  double h_beta;
  double b;
  double d;
  double big_b;
  double q;
  double omega;
  double eigenvalue;
} RacetrackSpectral;

/*
 Critical manufacturing transport costs of one mode. Missing values are NaN.
 */
typedef struct RacetrackCritical {
  double lower;
  double upper;
  /*
   0: no crossing, 1: single, 2: pair, 3: more than two.
   */
  int32_t status;
} RacetrackCritical;

/*
 Summary of a simulation run to its stationary state.
 */
typedef struct RacetrackRunSummary {
  size_t steps;
  /*
   1 when the stop criterion was met, 0 when `max_steps` was reached.
   */
  int32_t converged;
  size_t spikes;
  double max_mass_drift;
} RacetrackRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread, or NULL if none.
 */
const char *racetrack_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *racetrack_version(void);

/*
 Baseline parameters: mu 0.5, sigma 3, eta 2, tau_a 2, tau_m 4, rho 1, gamma 1.
 */
struct RacetrackParams racetrack_params_default(void);

/*
 Check every parameter bound.

 # Safety
 `params` must be NULL or point to a valid `RacetrackParams`.
 */
enum RacetrackStatus racetrack_params_validate(const struct RacetrackParams *params);

/*
 Growth rate of mode `n` of the uniform state.

 # Safety
 `params` must point to a valid `RacetrackParams` and `out` to writable
 memory for one `RacetrackSpectral`.
 */
enum RacetrackStatus racetrack_mode_growth(int64_t n,
                                           const struct RacetrackParams *params,
                                           struct RacetrackSpectral *out);

/*
 Critical `tau_m` values of mode `n` on the default scan (1e-3 to 20,
 400 geometric points, bisection to 1e-8). `params->tau_m` is ignored.

 # Safety
 `params` must point to a valid `RacetrackParams` and `out` to writable
 memory for one `RacetrackCritical`.
 */
enum RacetrackStatus racetrack_critical_points(int64_t n,
                                               const struct RacetrackParams *params,
                                               struct RacetrackCritical *out);

/*
 Create a grid of `nodes` points (even, at least 4) on a circle of radius
 `radius`.

 # Safety
 `out` must point to writable memory for one pointer.
 */
enum RacetrackStatus racetrack_grid_new(size_t nodes, double radius, struct RacetrackGrid **out);

/*
 Release a grid. NULL is ignored.

 # Safety
 `grid` must be NULL or a handle from `racetrack_grid_new` not yet freed.
 */
void racetrack_grid_free(struct RacetrackGrid *grid);

/*
 Number of nodes, or 0 for NULL.

 # Safety
 `grid` must be NULL or a live grid handle.
 */
size_t racetrack_grid_len(const struct RacetrackGrid *grid);

/*
 Copy the node angles into `out`, which must hold exactly the grid length.

 # Safety
 `grid` must be a live grid handle and `out` valid for `len` writes.
 */
enum RacetrackStatus racetrack_grid_angles(const struct RacetrackGrid *grid,
                                           double *out,
                                           size_t len);

/*
 Create an equilibrium solver with default options for `grid` and
 `params`. The radius of the grid must equal `params->rho`.

 # Safety
 `grid` must be a live grid handle, `params` a valid pointer and `out`
 writable for one pointer.
 */
enum RacetrackStatus racetrack_solver_new(const struct RacetrackGrid *grid,
                                          const struct RacetrackParams *params,
                                          struct RacetrackSolver **out);

/*
 Release a solver. NULL is ignored.

 # Safety
 `solver` must be NULL or a handle from `racetrack_solver_new` not yet freed.
 */
void racetrack_solver_free(struct RacetrackSolver *solver);

/*
 Solve the instantaneous equilibrium for the worker density `lambda`
 (unit mass) with uniform farmers, writing the real wage of
 manufacturing workers into `real_wage`. Both arrays hold `len` values,
 which must equal the grid length. `iterations` may be NULL.

 # Safety
 `solver` must be a live handle; `lambda` and `real_wage` valid for `len`
 values; `iterations` NULL or writable.
 */
enum RacetrackStatus racetrack_solver_solve(const struct RacetrackSolver *solver,
                                            const double *lambda,
                                            double *real_wage,
                                            size_t len,
                                            size_t *iterations);

/*
 Run the migration dynamics from a seeded random perturbation of
 relative size `amplitude` with the default time step (0.01) and stop
 rule, writing the final density into `lambda_out` (grid length) and a
 summary into `summary`.

 # Safety
 `grid` must be a live handle, `params` valid, `lambda_out` writable for
 `len` values and `summary` writable.
 */
enum RacetrackStatus racetrack_simulate(const struct RacetrackGrid *grid,
                                        const struct RacetrackParams *params,
                                        uint64_t seed,
                                        double amplitude,
                                        size_t max_steps,
                                        double *lambda_out,
                                        size_t len,
                                        struct RacetrackRunSummary *summary);

/*
 Count spikes of a density sampled on a circular grid with the default
 rule (peaks at least 10% of the maximum, above `uniform`, merged when at
 most two nodes apart).

 # Safety
 `values` must be valid for `len` reads and `count` writable.
 */
enum RacetrackStatus racetrack_count_spikes(const double *values,
                                            size_t len,
                                            double uniform,
                                            size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RACETRACK_H */
