#ifndef RASR_H
#define RASR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every entry point.
 */
typedef enum RasrStatus {
  RASR_STATUS_OK = 0,
  RASR_STATUS_NULL_POINTER = 1,
  RASR_STATUS_VALIDATION = 2,
  RASR_STATUS_DOMAIN = 3,
  RASR_STATUS_PARSE = 4,
  RASR_STATUS_UNSUPPORTED = 5,
  RASR_STATUS_SIZE_GUARD = 6,
  RASR_STATUS_HORIZON_CAP = 7,
  RASR_STATUS_IO = 8,
  RASR_STATUS_INTERNAL = 9,
  RASR_STATUS_PANIC = 10,
  RASR_STATUS_BUFFER_TOO_SMALL = 11,
} RasrStatus;

/**
 * Dynamics used by [`rasr_simulate`].
 */
typedef enum RasrRollout {
  RASR_ROLLOUT_ENSEMBLE = 0,
  RASR_ROLLOUT_MEAN = 1,
} RasrRollout;

/**
 * Posterior ensemble of transition models.
 */
typedef struct RasrEnsemble RasrEnsemble;

/**
 * Result of an ERM solve.
 */
typedef struct RasrErmReport RasrErmReport;

/**
 * Result of an EVaR solve.
 */
typedef struct RasrEvarReport RasrEvarReport;

/**
 * Time-indexed deterministic policy.
 */
typedef struct RasrPlan RasrPlan;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or null. Valid until the next
 * failing call on the same thread; do not free.
 */
const char *rasr_last_error_message(void);

/**
 * Releases a string returned by a `*_to_json` function.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void rasr_string_free(char *s);

/**
 * `ERM^alpha` of the distribution given by `outcomes` and `probabilities`.
 *
 * # Safety
 * Both arrays must hold `n` doubles; `out` must be writable.
 */
enum RasrStatus rasr_erm(const double *outcomes,
                         const double *probabilities,
                         size_t n,
                         double alpha,
                         double *out_value);

/**
 * `EVaR_beta` and its maximizing risk level (`INFINITY` when the minimum is attained).
 *
 * # Safety
 * Both arrays must hold `n` doubles; the out pointers must be writable.
 */
enum RasrStatus rasr_evar(const double *outcomes,
                          const double *probabilities,
                          size_t n,
                          double beta,
                          double *out_value,
                          double *out_alpha);

/**
 * `VaR_beta` of the distribution.
 *
 * # Safety
 * Both arrays must hold `n` doubles; `out_value` must be writable.
 */
enum RasrStatus rasr_var(const double *outcomes,
                         const double *probabilities,
                         size_t n,
                         double beta,
                         double *out_value);

/**
 * `CVaR_beta` of the distribution.
 *
 * # Safety
 * Both arrays must hold `n` doubles; `out_value` must be writable.
 */
enum RasrStatus rasr_cvar(const double *outcomes,
                          const double *probabilities,
                          size_t n,
                          double beta,
                          double *out_value);

/**
 * Loads a CSV model. With `is_ensemble` nonzero the file carries
 * `id_model,weight` columns; otherwise it is a single MDP. The initial state is 0.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out_ensemble` must be writable.
 */
enum RasrStatus rasr_ensemble_load(const char *path,
                                   int32_t is_ensemble,
                                   double gamma,
                                   struct RasrEnsemble **out_ensemble);

/**
 * The four-state counterexample as a single-model ensemble.
 *
 * # Safety
 * `out_ensemble` must be writable.
 */
enum RasrStatus rasr_ensemble_counterexample(struct RasrEnsemble **out_ensemble);

/**
 * The chain domain with its perturbed posterior ensemble.
 *
 * # Safety
 * `out_ensemble` must be writable.
 */
enum RasrStatus rasr_ensemble_chain(size_t n,
                                    double slip,
                                    size_t n_models,
                                    double perturb,
                                    uint64_t seed,
                                    struct RasrEnsemble **out_ensemble);

/**
 * State, action and model counts.
 *
 * # Safety
 * `ensemble` must be a live handle; null out pointers are skipped.
 */
enum RasrStatus rasr_ensemble_dims(const struct RasrEnsemble *ensemble,
                                   size_t *n_states,
                                   size_t *n_actions,
                                   size_t *n_models);

/**
 * # Safety
 * `ensemble` must be null or a live handle.
 */
void rasr_ensemble_free(struct RasrEnsemble *ensemble);

/**
 * Finite-horizon ERM solve over `horizon` steps with zero terminal value.
 *
 * # Safety
 * `ensemble` must be a live handle; `out_report` must be writable.
 */
enum RasrStatus rasr_solve_erm_finite(const struct RasrEnsemble *ensemble,
                                      double alpha,
                                      size_t horizon,
                                      struct RasrErmReport **out_report);

/**
 * Infinite-horizon ERM solve to loss bound `tolerance`.
 *
 * # Safety
 * `ensemble` must be a live handle; `out_report` must be writable.
 */
enum RasrStatus rasr_solve_erm_infinite(const struct RasrEnsemble *ensemble,
                                        double alpha,
                                        double tolerance,
                                        struct RasrErmReport **out_report);

/**
 * Objective `v_0(s0)` and loss bound (`NAN` when none applies).
 *
 * # Safety
 * `report` must be a live handle; null out pointers are skipped.
 */
enum RasrStatus rasr_erm_report_objective(const struct RasrErmReport *report,
                                          double *out_objective,
                                          double *out_loss_bound);

/**
 * Copies the report's plan into a new handle.
 *
 * # Safety
 * `report` must be a live handle; `out_plan` must be writable.
 */
enum RasrStatus rasr_erm_report_plan(const struct RasrErmReport *report,
                                     struct RasrPlan **out_plan);

/**
 * Canonical JSON of the report; release with [`rasr_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out_json` must be writable.
 */
enum RasrStatus rasr_erm_report_to_json(const struct RasrErmReport *report, char **out_json);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
void rasr_erm_report_free(struct RasrErmReport *report);

/**
 * EVaR solve with guarantee `delta`. `horizon` > 0 selects a finite-horizon
 * solve; 0 selects the infinite-horizon solve with `tolerance`.
 *
 * # Safety
 * `ensemble` must be a live handle; `out_report` must be writable.
 */
enum RasrStatus rasr_solve_evar(const struct RasrEnsemble *ensemble,
                                double beta,
                                double delta,
                                size_t horizon,
                                double tolerance,
                                struct RasrEvarReport **out_report);

/**
 * Objective `max_k h(alpha_k)` and the selected level.
 *
 * # Safety
 * `report` must be a live handle; null out pointers are skipped.
 */
enum RasrStatus rasr_evar_report_objective(const struct RasrEvarReport *report,
                                           double *out_objective,
                                           double *out_best_alpha);

/**
 * Copies the `(alpha_k, h(alpha_k))` curve; points whose inner solve was
 * skipped have `h = NAN`. `*out_len` always receives the curve length; with
 * `capacity` below it nothing is copied and `BufferTooSmall` is returned.
 *
 * # Safety
 * `report` must be a live handle; the arrays must hold `capacity` doubles.
 */
enum RasrStatus rasr_evar_report_h_curve(const struct RasrEvarReport *report,
                                         double *alphas,
                                         double *h_values,
                                         size_t capacity,
                                         size_t *out_len);

/**
 * Copies the report's plan into a new handle.
 *
 * # Safety
 * `report` must be a live handle; `out_plan` must be writable.
 */
enum RasrStatus rasr_evar_report_plan(const struct RasrEvarReport *report,
                                      struct RasrPlan **out_plan);

/**
 * Canonical JSON of the report; release with [`rasr_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out_json` must be writable.
 */
enum RasrStatus rasr_evar_report_to_json(const struct RasrEvarReport *report, char **out_json);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
void rasr_evar_report_free(struct RasrEvarReport *report);

/**
 * Action of the plan in `state` at step `t`.
 *
 * # Safety
 * `plan` must be a live handle; `out_action` must be writable.
 */
enum RasrStatus rasr_plan_action(const struct RasrPlan *plan,
                                 size_t t,
                                 size_t state,
                                 size_t *out_action);

/**
 * # Safety
 * `plan` must be null or a live handle.
 */
void rasr_plan_free(struct RasrPlan *plan);

/**
 * Simulates `episodes` episodes of `horizon` steps into `out_returns`.
 *
 * # Safety
 * Handles must be live; `out_returns` must hold `episodes` doubles.
 */
enum RasrStatus rasr_simulate(const struct RasrEnsemble *ensemble,
                              const struct RasrPlan *plan,
                              size_t episodes,
                              size_t horizon,
                              uint64_t seed,
                              enum RasrRollout rollout,
                              double *out_returns);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RASR_H */
