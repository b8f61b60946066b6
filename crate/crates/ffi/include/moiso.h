#ifndef MOISO_H
#define MOISO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum MoisoStatus {
  MOISO_STATUS_OK = 0,
  MOISO_STATUS_NULL_POINTER = 1,
  MOISO_STATUS_DOMAIN = 2,
  MOISO_STATUS_STRUCTURE = 3,
  MOISO_STATUS_CALIBRATION = 4,
  MOISO_STATUS_FIT = 5,
  MOISO_STATUS_FORMAT = 6,
  MOISO_STATUS_STATE = 7,
  MOISO_STATUS_SIZE = 8,
  MOISO_STATUS_UNDEFINED_RATIO = 9,
  MOISO_STATUS_CONFIG = 10,
  MOISO_STATUS_IO = 11,
  /**
   * A Rust panic was caught at the boundary.
   */
  MOISO_STATUS_INTERNAL = 12,
} MoisoStatus;

/**
 * Opaque isolator configuration.
 */
typedef struct MoisoDevice MoisoDevice;

/**
 * Opaque biphoton state.
 */
typedef struct MoisoState MoisoState;

/**
 * Classical targets for calibration. An infinite peak isolation is allowed.
 */
typedef struct MoisoTargets {
  double peak_isolation_db;
  double peak_wavelength_nm;
  double insertion_loss_db;
  double bandwidth_10db_nm;
  double reference_wavelength_nm;
  double isolation_at_reference_db;
  double insertion_loss_at_reference_db;
} MoisoTargets;

/**
 * Counts from [`moiso_count_coincidences`].
 */
typedef struct MoisoCoincidences {
  uint64_t raw_coincidences;
  double accidentals;
  double net;
  double sigma;
  uint64_t singles_i;
  uint64_t singles_ii;
} MoisoCoincidences;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *moiso_last_error(void);

/**
 * The measured device characteristics used by default.
 */
struct MoisoTargets moiso_targets_default(void);

/**
 * Uncalibrated default device.
 *
 * # Safety
 * `device` must be a valid pointer to writable storage.
 */
enum MoisoStatus moiso_device_default(struct MoisoDevice **device);

/**
 * Fits the device model to `targets`.
 *
 * # Safety
 * `targets` must be readable and `device` writable.
 */
enum MoisoStatus moiso_device_calibrate(const struct MoisoTargets *targets,
                                        struct MoisoDevice **device);

/**
 * Device from a JSON object with the configuration fields; missing fields
 * take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `device` writable.
 */
enum MoisoStatus moiso_device_from_json(const char *json, struct MoisoDevice **device);

/**
 * # Safety
 * `device` must come from this library and not be used afterwards.
 */
void moiso_device_free(struct MoisoDevice *device);

/**
 * Power transmission from port `input` to port `output` (1-4).
 *
 * # Safety
 * `device` must be a live handle and `power` writable.
 */
enum MoisoStatus moiso_pair_power(const struct MoisoDevice *device,
                                  double wavelength_nm,
                                  double m,
                                  uint8_t input_port,
                                  uint8_t output_port,
                                  double *power);

/**
 * Forward over backward transmission in dB for the pair `input → output`.
 *
 * # Safety
 * `device` must be a live handle and `isolation_db` writable.
 */
enum MoisoStatus moiso_isolation_db(const struct MoisoDevice *device,
                                    double wavelength_nm,
                                    double m,
                                    uint8_t input_port,
                                    uint8_t output_port,
                                    double *isolation_db);

/**
 * Forward and backward transmission in dB at `n` wavelengths.
 *
 * # Safety
 * `wavelengths_nm`, `forward_db` and `backward_db` must each hold `n`
 * elements.
 */
enum MoisoStatus moiso_spectrum(const struct MoisoDevice *device,
                                const double *wavelengths_nm,
                                size_t n,
                                double m,
                                uint8_t input_port,
                                uint8_t output_port,
                                double *forward_db,
                                double *backward_db);

/**
 * Gaussian frequency-anticorrelated pair state on a grid of `n_bins`
 * centred on `center_nm` spanning `±half_width_ghz`.
 *
 * # Safety
 * `state` must be writable.
 */
enum MoisoStatus moiso_state_spdc(double center_nm,
                                  double half_width_ghz,
                                  size_t n_bins,
                                  double bandwidth_fwhm_ghz,
                                  struct MoisoState **state);

/**
 * # Safety
 * `state` must come from this library and not be used afterwards.
 */
void moiso_state_free(struct MoisoState *state);

/**
 * Replaces the state by its post-selected image after the signal photon
 * crosses the device from `input` to `output`; writes the survival
 * probability.
 *
 * # Safety
 * Handles must be live and `survival` writable.
 */
enum MoisoStatus moiso_state_through_device(struct MoisoState *state,
                                            const struct MoisoDevice *device,
                                            double m,
                                            uint8_t input_port,
                                            uint8_t output_port,
                                            double *survival);

/**
 * Coincidence probability behind a 50/50 splitter with the signal delayed.
 *
 * # Safety
 * `state` must be live and `probability` writable.
 */
enum MoisoStatus moiso_hom_probability(const struct MoisoState *state,
                                       double mode_overlap,
                                       double delay_ps,
                                       double *probability);

/**
 * `(c_max − c_min) / c_max`.
 *
 * # Safety
 * `visibility` must be writable.
 */
enum MoisoStatus moiso_visibility(double c_max, double c_min, double *visibility);

/**
 * Coincidences in a two-channel stream given as parallel arrays.
 * `channels[i]` is 1 or 2; times must be non-decreasing per channel.
 *
 * # Safety
 * `channels` and `times_ps` must hold `n` elements; `result` writable.
 */
enum MoisoStatus moiso_count_coincidences(const uint8_t *channels,
                                          const uint64_t *times_ps,
                                          size_t n,
                                          double window_ps,
                                          double accidental_offset_ps,
                                          struct MoisoCoincidences *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOISO_H */
