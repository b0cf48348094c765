#ifndef TOMATOSCAN_H
#define TOMATOSCAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_INPUT = 2,
  TS_STATUS_INVALID_POLYGON = 3,
  TS_STATUS_DIMENSION_MISMATCH = 4,
  TS_STATUS_MISSING_DEPTH = 5,
  TS_STATUS_POSE_UNAVAILABLE = 6,
  TS_STATUS_IO = 7,
  TS_STATUS_PARSE = 8,
  TS_STATUS_PANIC = 99,
} TsStatus;

/**
 * Fitted depth-to-scale model.
 */
typedef struct TsCalibration TsCalibration;

/**
 * Polygon contour in pixel coordinates.
 */
typedef struct TsPolygon TsPolygon;

typedef struct TsPixelPhenotype {
  double width_px;
  double height_px;
  double area_px2;
  double volume_px3;
} TsPixelPhenotype;

typedef struct TsMetricPhenotype {
  double width_cm;
  double height_cm;
  double area_cm2;
  double volume_cm3;
  double scale_px_per_cm;
} TsMetricPhenotype;

typedef struct TsPose {
  double dx;
  double dy;
  /**
   * Radians in [0, pi].
   */
  double theta;
  /**
   * Radians in (-pi, pi], positive when the carpopodium leans right.
   */
  double theta_signed;
} TsPose;

typedef struct TsBoxStats {
  double median;
  double q1;
  double q3;
  double min;
  double max;
  size_t n;
} TsBoxStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the next call.
 */
const char *ts_last_error(void);

/**
 * Builds a polygon from `n` interleaved `x, y` pairs (`xy` holds `2 * n` values).
 *
 * # Safety
 * `xy` must point to `2 * n` readable doubles and `out` must be writable.
 */
enum TsStatus ts_polygon_new(const double *xy, size_t n, struct TsPolygon **out);

/**
 * # Safety
 * `poly` must come from [`ts_polygon_new`] and not be freed twice.
 */
void ts_polygon_free(struct TsPolygon *poly);

/**
 * Absolute shoelace area in px^2.
 *
 * # Safety
 * `poly` must be a live handle and `out` writable.
 */
enum TsStatus ts_polygon_area(const struct TsPolygon *poly, double *out);

/**
 * Pixel-space width, height, area and revolution volume.
 *
 * # Safety
 * `poly` must be a live handle and `out` writable.
 */
enum TsStatus ts_polygon_measure(const struct TsPolygon *poly, struct TsPixelPhenotype *out);

/**
 * Least-squares fit of `k` from `n` (depth cm, pixels per cm) samples.
 *
 * # Safety
 * `depth_cm` and `pixels_per_cm` must each hold `n` doubles; `out` must be writable.
 */
enum TsStatus ts_calibration_fit(const double *depth_cm,
                                 const double *pixels_per_cm,
                                 size_t n,
                                 struct TsCalibration **out);

/**
 * Wraps a known coefficient.
 *
 * # Safety
 * `out` must be writable.
 */
enum TsStatus ts_calibration_from_k(double k, struct TsCalibration **out);

/**
 * # Safety
 * `cal` must be a live handle; returns NaN when null.
 */
double ts_calibration_k(const struct TsCalibration *cal);

/**
 * # Safety
 * `cal` must come from this library and not be freed twice.
 */
void ts_calibration_free(struct TsCalibration *cal);

/**
 * Converts pixel traits to metric traits at `depth_cm`.
 *
 * # Safety
 * All pointers must be valid; `out` writable.
 */
enum TsStatus ts_fuse(const struct TsPixelPhenotype *px,
                      const struct TsCalibration *cal,
                      double depth_cm,
                      struct TsMetricPhenotype *out);

/**
 * Pose vector and angles from body and carpopodium keypoints.
 *
 * # Safety
 * `out` must be writable.
 */
enum TsStatus ts_pose_compute(double body_x,
                              double body_y,
                              double carp_x,
                              double carp_y,
                              struct TsPose *out);

/**
 * Mean edge error in percent over `n_pairs` (prediction, ground truth) handles.
 *
 * # Safety
 * `preds` and `gts` must each hold `n_pairs` live handles; `out` writable.
 */
enum TsStatus ts_mean_edge_error(const struct TsPolygon *const *preds,
                                 const struct TsPolygon *const *gts,
                                 size_t n_pairs,
                                 size_t samples,
                                 double *out);

/**
 * Signed relative error in percent.
 *
 * # Safety
 * `out` must be writable.
 */
enum TsStatus ts_relative_error(double truth, double predicted, double *out);

/**
 * Mean absolute Sobel-magnitude difference of two row-major masks.
 *
 * # Safety
 * `pred` and `gt` must each hold `width * height` doubles; `out` writable.
 */
enum TsStatus ts_edge_loss(const double *pred,
                           const double *gt,
                           size_t width,
                           size_t height,
                           double *out);

/**
 * Contrast then acutance enhancement of an interleaved 8-bit image.
 * `output` receives `width * height * channels` bytes.
 *
 * # Safety
 * `input` and `output` must each hold `width * height * channels` bytes.
 */
enum TsStatus ts_edge_boost(const uint8_t *input,
                            size_t width,
                            size_t height,
                            size_t channels,
                            double contrast,
                            double acutance,
                            uint8_t *output);

/**
 * Box statistics of the bundled test-set errors for one trait
 * (0 width, 1 height, 2 area, 3 volume). `recomputed` selects errors
 * derived from the truth/prediction columns instead of the tabulated ones.
 *
 * # Safety
 * `out` must be writable.
 */
enum TsStatus ts_bundled_stats(uint32_t trait_index, bool recomputed, struct TsBoxStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOMATOSCAN_H */
