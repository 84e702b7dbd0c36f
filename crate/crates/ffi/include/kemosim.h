#ifndef KEMOSIM_H
#define KEMOSIM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KsInfLocation {
  KS_INF_LOCATION_INTERIOR = 0,
  KS_INF_LOCATION_LOWER_ENDPOINT = 1,
  KS_INF_LOCATION_TAIL = 2,
} KsInfLocation;

typedef enum KsRunStatus {
  KS_RUN_STATUS_COMPLETED = 0,
  KS_RUN_STATUS_BLOW_UP_SUSPECTED = 1,
  KS_RUN_STATUS_DT_UNDERFLOW = 2,
  KS_RUN_STATUS_POSITIVITY_LOST = 3,
} KsRunStatus;

typedef enum KsStatus {
  KS_STATUS_OK = 0,
  KS_STATUS_NULL_POINTER = 1,
  KS_STATUS_CONFIG = 2,
  KS_STATUS_DOMAIN = 3,
  KS_STATUS_NEGATIVE_MOTILITY = 4,
  KS_STATUS_IO = 5,
  KS_STATUS_BUFFER_TOO_SMALL = 6,
  KS_STATUS_POSITIVITY_LOST = 7,
  KS_STATUS_NON_FINITE = 8,
  KS_STATUS_PANIC = 99,
} KsStatus;

/**
 * Motility pair together with `d` and `N`.
 */
typedef struct KsModel KsModel;

/**
 * A simulation in progress.
 */
typedef struct KsSimulation KsSimulation;

typedef struct KsCoefficients {
  double a;
  double b;
  double c;
} KsCoefficients;

typedef struct KsQInterval {
  double lower;
  double upper;
  bool upper_inclusive;
  bool empty;
} KsQInterval;

typedef struct KsAuditReport {
  bool h1_ok;
  bool h2_ok;
  double inf_f;
  double inf_f_v;
  enum KsInfLocation inf_f_location;
  bool h3_ok;
  double h3_margin;
  double tail_f;
  double tail_slope;
} KsAuditReport;

typedef struct KsExponents {
  double p;
  double q;
  bool feasible;
} KsExponents;

typedef struct KsThreshold {
  double inf_f;
  bool bounded_claim;
  /**
   * `true` when the infimum sits at the lower bound of `v`.
   */
  bool strong_decay;
} KsThreshold;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ks_last_error_message(char *buf, size_t len);

/**
 * `gamma = 1`, `phi = chi / v`.
 *
 * # Safety
 * `out` must be a valid pointer to a `KsModel*`.
 */
enum KsStatus ks_model_new_singular(double chi, double d, size_t n_dim, struct KsModel **out);

/**
 * `gamma = sigma / v^lambda`, `phi = (alpha - 1) gamma'`.
 *
 * # Safety
 * `out` must be a valid pointer to a `KsModel*`.
 */
enum KsStatus ks_model_new_algebraic(double sigma,
                                     double lambda,
                                     double alpha,
                                     double d,
                                     size_t n_dim,
                                     struct KsModel **out);

/**
 * # Safety
 * `out` must be a valid pointer to a `KsModel*`.
 */
enum KsStatus ks_model_new_constant(double gamma0,
                                    double phi0,
                                    double d,
                                    size_t n_dim,
                                    struct KsModel **out);

/**
 * Tabulated pair `(v[i], gamma[i], phi[i])`, `i < n`, interpolated monotonically.
 *
 * # Safety
 * `v`, `gamma`, `phi` must each point to `n` readable doubles; `out` must be
 * a valid pointer to a `KsModel*`.
 */
enum KsStatus ks_model_new_custom(const double *v,
                                  const double *gamma,
                                  const double *phi,
                                  size_t n,
                                  double d,
                                  size_t n_dim,
                                  struct KsModel **out);

/**
 * # Safety
 * `model` must be null or a handle from a `ks_model_new_*` function not yet freed.
 */
void ks_model_free(struct KsModel *model);

/**
 * The weight `F(v)`; `+inf` where its denominator vanishes.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum KsStatus ks_eval_f(const struct KsModel *model, double v, double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum KsStatus ks_coeff_abc(const struct KsModel *model,
                           double p,
                           double v,
                           struct KsCoefficients *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum KsStatus ks_eval_g(const struct KsModel *model, double p, double q, double v, double *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum KsStatus ks_q_interval(const struct KsModel *model,
                            double p,
                            double v,
                            struct KsQInterval *out);

/**
 * Scans `F` over `[v_min, v_max]`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum KsStatus ks_audit(const struct KsModel *model,
                       double v_min,
                       double v_max,
                       size_t grid_points,
                       struct KsAuditReport *out);

/**
 * Uniform exponents `(p, q)` for the weighted functional.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum KsStatus ks_choose_exponents(const struct KsModel *model,
                                  double v_min,
                                  double v_max,
                                  size_t grid_points,
                                  struct KsExponents *out);

/**
 * Closed-form infimum of `F` for the algebraic family over `v >= eta`.
 *
 * # Safety
 * `out` must be writable.
 */
enum KsStatus ks_algebraic_threshold(double sigma,
                                     double lambda,
                                     double alpha,
                                     double d,
                                     double eta,
                                     size_t n_dim,
                                     struct KsThreshold *out);

/**
 * Starts a simulation on a `cells_x` x `cells_y` grid (`cells_y = 0` for a
 * line) with row-major initial data of length `cells_x * max(cells_y, 1)`.
 * Step control takes its defaults.
 *
 * # Safety
 * `model` must be a live handle, `u0`/`v0` must point to `len` doubles and
 * `out` must be a valid pointer to a `KsSimulation*`.
 */
enum KsStatus ks_sim_new(const struct KsModel *model,
                         size_t cells_x,
                         size_t cells_y,
                         double length_x,
                         double length_y,
                         const double *u0,
                         const double *v0,
                         size_t len,
                         struct KsSimulation **out);

/**
 * Builds a simulation from a TOML experiment file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer to a `KsSimulation*`.
 */
enum KsStatus ks_sim_new_from_config(const char *path, struct KsSimulation **out);

/**
 * # Safety
 * `sim` must be null or a live simulation handle.
 */
void ks_sim_free(struct KsSimulation *sim);

/**
 * Advances by one stability-limited step; the step size is written to `dt`
 * when it is non-null.
 *
 * # Safety
 * `sim` must be a live handle; `dt` null or writable.
 */
enum KsStatus ks_sim_step(struct KsSimulation *sim, double *dt);

/**
 * Integrates up to `t_end` and reports how the run ended.
 *
 * # Safety
 * `sim` must be a live handle and `status` writable.
 */
enum KsStatus ks_sim_run(struct KsSimulation *sim, double t_end, enum KsRunStatus *status);

/**
 * # Safety
 * `sim` must be a live handle.
 */
double ks_sim_time(const struct KsSimulation *sim);

/**
 * Number of cells.
 *
 * # Safety
 * `sim` must be a live handle.
 */
size_t ks_sim_len(const struct KsSimulation *sim);

/**
 * Copies the cell values of `u` into `buf`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` must hold `len` doubles.
 */
enum KsStatus ks_sim_copy_u(const struct KsSimulation *sim, double *buf, size_t len);

/**
 * Copies the cell values of `v` into `buf`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` must hold `len` doubles.
 */
enum KsStatus ks_sim_copy_v(const struct KsSimulation *sim, double *buf, size_t len);

/**
 * `∫ u`.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum KsStatus ks_sim_mass(const struct KsSimulation *sim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KEMOSIM_H */
