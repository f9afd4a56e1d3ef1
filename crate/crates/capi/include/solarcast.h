#ifndef SOLARCAST_H
#define SOLARCAST_H

/* Generated by cbindgen from solarcast-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SolarcastStatus {
  SOLARCAST_STATUS_OK = 0,
  // Input rejected by a range, arity, or consistency check.
  SOLARCAST_STATUS_INVALID_ARGUMENT = 1,
  SOLARCAST_STATUS_IO_ERROR = 2,
  // File exists but is not a recognized solarcast format/version.
  SOLARCAST_STATUS_FORMAT_ERROR = 3,
  SOLARCAST_STATUS_INTERNAL_ERROR = 4,
} SolarcastStatus;

// Opaque handle to a loaded model plus its stored feature statistics.
typedef struct SolarcastModel SolarcastModel;

// Sun position for one location and instant, angles in degrees.
typedef struct SolarcastSunPosition {
  double altitude_deg;
  double azimuth_deg;
  double declination_deg;
  double hour_angle_deg;
} SolarcastSunPosition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Number of features the model contract expects (and their order's arity).
size_t solarcast_feature_count(void);

// Copies the last error message for this thread into `buf` (always
// NUL-terminated when `len > 0`). Returns the full message length
// including the NUL, or 0 when there is no pending error.
//
// # Safety
// `buf` must point to at least `len` writable bytes, or be NULL with
// `len == 0` to query the required size.
size_t solarcast_last_error_message(char *buf, size_t len);

// Sun altitude/azimuth at `unix_seconds` (UTC) for the given coordinates.
//
// # Safety
// `out` must be a valid pointer to a [`SolarcastSunPosition`].
enum SolarcastStatus solarcast_sun_position(double latitude_deg,
                                            double longitude_deg,
                                            int64_t unix_seconds,
                                            struct SolarcastSunPosition *out);

// Instant of maximum solar altitude during the UTC day containing
// `unix_seconds`, written as Unix seconds.
//
// # Safety
// `out_unix_seconds` must be a valid pointer.
enum SolarcastStatus solarcast_solar_noon(double latitude_deg,
                                          double longitude_deg,
                                          int64_t unix_seconds,
                                          int64_t *out_unix_seconds);

// Current solar altitude over the same day's solar-noon altitude,
// clamped to [0, 1].
//
// # Safety
// `out_ratio` must be a valid pointer.
enum SolarcastStatus solarcast_solar_altitude_ratio(double latitude_deg,
                                                    double longitude_deg,
                                                    int64_t unix_seconds,
                                                    double *out_ratio);

// Clear-sky surface irradiance (W/m²) for a solar altitude in degrees;
// zero at and below the horizon or for non-finite input.
double solarcast_potential_irradiance(double altitude_deg);

// Measured over potential irradiance, capped at 1.5; zero when the
// potential is zero.
//
// # Safety
// `out_index` must be a valid pointer.
enum SolarcastStatus solarcast_clear_sky_index(double measured_wm2,
                                               double potential_wm2,
                                               double *out_index);

// Loads a model file (with any stored feature statistics) and hands back
// an owned opaque handle.
//
// # Safety
// `path` must be a NUL-terminated UTF-8 string; `out_model` must be a
// valid pointer. The returned handle must be released exactly once with
// [`solarcast_model_free`].
enum SolarcastStatus solarcast_model_load(const char *path, struct SolarcastModel **out_model);

// Releases a handle from [`solarcast_model_load`]. NULL is a no-op.
//
// # Safety
// `model` must be NULL or a handle not yet freed.
void solarcast_model_free(struct SolarcastModel *model);

// Predicts surface solar radiation (W/m², floored at zero) from
// `feature_count` physical-unit features in the documented order.
// Stored standardization is applied automatically.
//
// # Safety
// `model` must be a live handle; `features` must point to
// `feature_count` doubles; `out_wm2` must be a valid pointer.
enum SolarcastStatus solarcast_model_predict(const struct SolarcastModel *model,
                                             const double *features,
                                             size_t feature_count,
                                             double *out_wm2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOLARCAST_H */
