#ifndef ADNET_H
#define ADNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdnetStatus {
  ADNET_STATUS_OK = 0,
  ADNET_STATUS_NULL_POINTER = 1,
  ADNET_STATUS_INVALID_ARGUMENT = 2,
  ADNET_STATUS_IO = 3,
  ADNET_STATUS_FORMAT = 4,
  ADNET_STATUS_SHAPE = 5,
  ADNET_STATUS_CONFIG = 6,
  ADNET_STATUS_NUMERIC = 7,
  ADNET_STATUS_VALIDATION = 8,
  ADNET_STATUS_PANIC = 9,
} AdnetStatus;

/**
 * Opaque trained model. Create with `adnet_network_load`, release with
 * `adnet_network_free`.
 */
typedef struct AdnetNetwork AdnetNetwork;

typedef struct AdnetMetrics {
  uint64_t tp;
  uint64_t tn;
  uint64_t fp;
  uint64_t fn_;
  double precision;
  double recall;
  double f1;
  /**
   * Nonzero when precision and recall are both zero and f1 is reported as 0.
   */
  bool degenerate;
} AdnetMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t adnet_last_error(char *buf, size_t len);

/**
 * Loads a model checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must point to writable storage.
 */
enum AdnetStatus adnet_network_load(const char *path, struct AdnetNetwork **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `net` must come from `adnet_network_load` and not be used afterwards.
 */
void adnet_network_free(struct AdnetNetwork *net);

/**
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum AdnetStatus adnet_network_grid_len(const struct AdnetNetwork *net, size_t *out);

/**
 * Whether the model consumes the GPS feature.
 *
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum AdnetStatus adnet_network_uses_gps(const struct AdnetNetwork *net, bool *out);

/**
 * Writes per-cell reconstruction probabilities into `out` (`len` values).
 * `gps` is null or three normalized values (lat, lon, alt); null means zeros.
 *
 * # Safety
 * `grid` and `out` must hold `len` elements; `gps` must be null or hold 3.
 */
enum AdnetStatus adnet_network_reconstruct(const struct AdnetNetwork *net,
                                           const uint8_t *grid,
                                           size_t len,
                                           const double *gps,
                                           double *out);

/**
 * Runs detection on one scene. `m_grid` and `flags` receive `len` bytes:
 * the binarized reconstruction and the anomalous-cell mask. `flags` and
 * `scene_anomalous` may be null.
 *
 * # Safety
 * Non-null buffers must hold `len` elements; `gps` must be null or hold 3.
 */
enum AdnetStatus adnet_detect(const struct AdnetNetwork *net,
                              const uint8_t *grid,
                              size_t len,
                              const double *gps,
                              double threshold,
                              uint8_t *m_grid,
                              uint8_t *flags,
                              bool *scene_anomalous);

/**
 * Confusion counts and precision, recall and F1 of `model_out` against
 * `ground`. `len` must be a positive multiple of 8.
 *
 * # Safety
 * `ground` and `model_out` must hold `len` bytes; `out` must be writable.
 */
enum AdnetStatus adnet_metrics(const uint8_t *ground,
                               const uint8_t *model_out,
                               size_t len,
                               struct AdnetMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADNET_H */
