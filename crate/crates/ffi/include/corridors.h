#ifndef CORRIDORS_H
#define CORRIDORS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DwStatus {
  DW_STATUS_OK = 0,
  DW_STATUS_NULL_POINTER = 1,
  DW_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad config, parameters, or a field that has not been built.
   */
  DW_STATUS_INVALID_INPUT = 3,
  /**
   * Numerical or i/o failure inside the library.
   */
  DW_STATUS_INTERNAL = 4,
  /**
   * The caller's buffer is too short; the required length is reported.
   */
  DW_STATUS_BUFFER_TOO_SMALL = 5,
  DW_STATUS_PANIC = 6,
} DwStatus;

/**
 * Plane field (Ψ, or Φ with the warp enabled) plus the config it came from.
 */
typedef struct DwField DwField;

typedef struct DwTrajectory DwTrajectory;

typedef struct DwVec2 {
  double x;
  double y;
} DwVec2;

typedef struct DwSite {
  int64_t i;
  int64_t j;
} DwSite;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer stays
 * valid until the next `dw_*` call on the same thread.
 */
const char *dw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dw_version(void);

/**
 * Builds the cached tile grid for `config_toml` under its output directory.
 * An existing matching field is reused unless `force` is set.
 */
enum DwStatus dw_build_field(const char *config_toml, bool force);

/**
 * Opens the plane field described by `config_toml`. Unless `grid.exact` is
 * set, the field must already be built with [`dw_build_field`].
 */
enum DwStatus dw_field_open(const char *config_toml, struct DwField **out);

void dw_field_free(struct DwField *field);

enum DwStatus dw_field_eval(const struct DwField *field, double x, double y, struct DwVec2 *out);

/**
 * Arrow at site (i, j): 0 for right, 1 for up.
 */
enum DwStatus dw_field_arrow(const struct DwField *field, int64_t i, int64_t j, uint8_t *out);

/**
 * Follows the arrows for `steps` steps from (i, j) and writes the
 * `steps + 1` visited sites into `sites`. `len` receives the number of sites;
 * when `cap` is too small nothing is written and the status says so.
 */
enum DwStatus dw_walk(const struct DwField *field,
                      int64_t i,
                      int64_t j,
                      size_t steps,
                      struct DwSite *sites,
                      size_t cap,
                      size_t *len);

/**
 * Integrates the field from (x, y) with the integrator settings of the
 * config the field was opened with.
 */
enum DwStatus dw_integrate(const struct DwField *field,
                           double x,
                           double y,
                           struct DwTrajectory **out);

void dw_trajectory_free(struct DwTrajectory *traj);

/**
 * Number of stored samples, or 0 for a null handle.
 */
size_t dw_trajectory_len(const struct DwTrajectory *traj);

/**
 * Number of lattice-line crossings, or 0 for a null handle.
 */
size_t dw_trajectory_event_count(const struct DwTrajectory *traj);

/**
 * Copies the samples into `times` and `points`, each holding `cap` entries.
 * Either buffer may be null to skip it.
 */
enum DwStatus dw_trajectory_copy(const struct DwTrajectory *traj,
                                 double *times,
                                 struct DwVec2 *points,
                                 size_t cap);

/**
 * Cells entered at each crossing, in order.
 */
enum DwStatus dw_trajectory_copy_cells(const struct DwTrajectory *traj,
                                       struct DwSite *cells,
                                       size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORRIDORS_H */
