#ifndef SCTUNE_H
#define SCTUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SctStatus {
  SCT_STATUS_OK = 0,
  SCT_STATUS_NULL_POINTER = 1,
  SCT_STATUS_INVALID_ARGUMENT = 2,
  SCT_STATUS_IO = 3,
  SCT_STATUS_INTERNAL = 4,
  SCT_STATUS_PANIC = 5,
} SctStatus;

/**
 * Stateful shared controller bound to a scene.
 */
typedef struct SctController SctController;

/**
 * Environment, robot geometry and distance field.
 */
typedef struct SctScene SctScene;

/**
 * Controller parameters.
 */
typedef struct SctParams {
  uint32_t np;
  uint32_t nc;
  double qx;
  double qy;
  double qtheta;
  double c1;
  double c2;
} SctParams;

/**
 * Outcome of one control cycle.
 */
typedef struct SctStep {
  /**
   * Applied joint velocities.
   */
  double u[3];
  /**
   * Joint configuration after one sample time.
   */
  double q_next[3];
  /**
   * End-effector pose (x, y, theta) after one sample time.
   */
  double ee_next[3];
  bool feasible;
} SctStep;

/**
 * Summary of a corpus evaluation.
 */
typedef struct SctEvalSummary {
  double objective;
  size_t n_movements;
  size_t n_succ;
  double min_sd;
  double max_infeasible_fraction;
} SctEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *sct_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sct_version(void);

struct SctParams sct_params_baseline(void);

/**
 * Builds a built-in environment (`operating-room`, `default` or `empty`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SctStatus sct_scene_new(const char *name, struct SctScene **out);

/**
 * # Safety
 * `scene` must come from `sct_scene_new` and not be used afterwards.
 */
void sct_scene_free(struct SctScene *scene);

/**
 * Signed distance (m) from a world point to the nearest obstacle.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SctStatus sct_scene_signed_distance(const struct SctScene *scene,
                                         double x,
                                         double y,
                                         double *out);

/**
 * Number of collision spheres, the length of `sct_scene_sphere_distances` output.
 */
size_t sct_sphere_count(void);

/**
 * Distances of all collision sphere centres at joint configuration `q`.
 *
 * # Safety
 * `q` points to 3 doubles and `out` to `sct_sphere_count()` doubles.
 */
enum SctStatus sct_scene_sphere_distances(const struct SctScene *scene,
                                          const double *q,
                                          double *out);

/**
 * Creates a controller with the default controller configuration.
 *
 * # Safety
 * Pointers must be valid; the scene may be freed afterwards.
 */
enum SctStatus sct_controller_new(const struct SctScene *scene,
                                  const struct SctParams *params,
                                  struct SctController **out);

/**
 * # Safety
 * `ctl` must come from `sct_controller_new` and not be used afterwards.
 */
void sct_controller_free(struct SctController *ctl);

/**
 * Forgets the warm start and input history.
 *
 * # Safety
 * `ctl` must be valid.
 */
enum SctStatus sct_controller_reset(struct SctController *ctl);

/**
 * One control cycle from configuration `q` (3 doubles) with the operator
 * twist `xd` (vx, vy, omega).
 *
 * # Safety
 * Pointers must be valid; `q` and `xd` point to 3 doubles each.
 */
enum SctStatus sct_controller_step(struct SctController *ctl,
                                   const double *q,
                                   const double *xd,
                                   struct SctStep *out);

/**
 * Evaluates `params` on a movement corpus file with the default settings.
 *
 * # Safety
 * Pointers must be valid; `corpus_path` is NUL-terminated.
 */
enum SctStatus sct_evaluate(const struct SctScene *scene,
                            const struct SctParams *params,
                            const char *corpus_path,
                            struct SctEvalSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCTUNE_H */
