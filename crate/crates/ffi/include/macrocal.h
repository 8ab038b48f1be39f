#ifndef MACROCAL_H
#define MACROCAL_H

#include <stddef.h>
#include <stdint.h>

typedef enum MacrocalStatus {
  MACROCAL_STATUS_OK = 0,
  MACROCAL_STATUS_CONFIG_ERROR = 2,
  MACROCAL_STATUS_ASSUMPTION_VIOLATED = 3,
  MACROCAL_STATUS_DIVERGED = 4,
  MACROCAL_STATUS_NULL_POINTER = 5,
  MACROCAL_STATUS_INVALID_ARGUMENT = 6,
  MACROCAL_STATUS_PANIC = 7,
} MacrocalStatus;

/**
 * Spectral analysis report.
 */
typedef struct MacrocalAnalysis MacrocalAnalysis;

/**
 * Parsed configuration.
 */
typedef struct MacrocalConfig MacrocalConfig;

/**
 * Result of one simulation run.
 */
typedef struct MacrocalTrajectory MacrocalTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread; empty if nothing failed yet.
 */
const char *macrocal_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *macrocal_version(void);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MacrocalStatus macrocal_config_from_toml(const char *text, struct MacrocalConfig **out);

/**
 * Loads a bundled preset by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MacrocalStatus macrocal_config_from_preset(const char *name, struct MacrocalConfig **out);

/**
 * Applies a `key.path=value` override.
 *
 * # Safety
 * `cfg` must come from this library; `assignment` must be NUL-terminated.
 */
enum MacrocalStatus macrocal_config_set(struct MacrocalConfig *cfg, const char *assignment);

/**
 * Number of sensor nodes.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be valid.
 */
enum MacrocalStatus macrocal_config_node_count(const struct MacrocalConfig *cfg, size_t *out);

/**
 * # Safety
 * `cfg` must come from this library or be null; it is invalid afterwards.
 */
void macrocal_config_free(struct MacrocalConfig *cfg);

/**
 * Validates the configuration and simulates one run.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be valid.
 */
enum MacrocalStatus macrocal_run(const struct MacrocalConfig *cfg, struct MacrocalTrajectory **out);

/**
 * Number of nodes and recorded checkpoints.
 *
 * # Safety
 * `traj` must come from this library; output pointers must be valid.
 */
enum MacrocalStatus macrocal_trajectory_shape(const struct MacrocalTrajectory *traj,
                                              size_t *nodes,
                                              size_t *checkpoints);

/**
 * Copies the final equivalent gains and offsets into `g` and `f`, which
 * must each hold `len` values, `len` being the node count.
 *
 * # Safety
 * `g` and `f` must point to `len` writable doubles.
 */
enum MacrocalStatus macrocal_trajectory_final(const struct MacrocalTrajectory *traj,
                                              double *g,
                                              double *f,
                                              size_t len);

/**
 * Metrics at checkpoint `index`.
 *
 * # Safety
 * `traj` must come from this library; output pointers must be valid.
 */
enum MacrocalStatus macrocal_trajectory_metric(const struct MacrocalTrajectory *traj,
                                               size_t index,
                                               uint64_t *t,
                                               double *spread,
                                               double *dist_limit,
                                               double *mse_proj);

/**
 * # Safety
 * `traj` must come from this library or be null; it is invalid afterwards.
 */
void macrocal_trajectory_free(struct MacrocalTrajectory *traj);

/**
 * Computes the spectral analysis of a configuration.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be valid.
 */
enum MacrocalStatus macrocal_analyze(const struct MacrocalConfig *cfg,
                                     struct MacrocalAnalysis **out);

/**
 * Predicted consensus limit `(g, f)` of the free-running network.
 *
 * # Safety
 * `a` must come from this library; output pointers must be valid.
 */
enum MacrocalStatus macrocal_analysis_limit(const struct MacrocalAnalysis *a, double *g, double *f);

/**
 * Heuristic largest stable constant step size.
 *
 * # Safety
 * `a` must come from this library and `out` must be valid.
 */
enum MacrocalStatus macrocal_analysis_safe_step(const struct MacrocalAnalysis *a, double *out);

/**
 * Plain-text report owned by the handle. Null if `a` is null.
 *
 * # Safety
 * `a` must come from this library or be null.
 */
const char *macrocal_analysis_report(const struct MacrocalAnalysis *a);

/**
 * # Safety
 * `a` must come from this library or be null; it is invalid afterwards.
 */
void macrocal_analysis_free(struct MacrocalAnalysis *a);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MACROCAL_H */
