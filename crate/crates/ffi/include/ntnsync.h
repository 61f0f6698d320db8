#ifndef NTNSYNC_H
#define NTNSYNC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes shared by every entry point.
 */
typedef enum NtnStatus {
  NtnStatus_Ok = 0,
  NtnStatus_NullPointer = 1,
  NtnStatus_InvalidConfig = 2,
  NtnStatus_BufferTooSmall = 3,
  NtnStatus_PreambleNotFound = 4,
  NtnStatus_EstimationFailed = 5,
  NtnStatus_Internal = 6,
  NtnStatus_Panic = 7,
} NtnStatus;

/*
 Preamble format selector.
 */
typedef enum NtnFormat {
  NtnFormat_Format0 = 0,
  NtnFormat_Format1 = 1,
} NtnFormat;

/*
 Propagation channel selector.
 */
typedef enum NtnChannel {
  NtnChannel_Awgn = 0,
  NtnChannel_TdlC = 1,
} NtnChannel;

/*
 Opaque estimator state: waveform, estimator settings and Doppler map.
 */
typedef struct NtnEstimator NtnEstimator;

/*
 Impairments applied by [`ntn_simulate`].
 */
typedef struct NtnImpairments {
  double toa_us;
  double cfo_hz;
  double doppler_rate_hz_per_s;
  /*
   Ignored when `noiseless` is non-zero.
   */
  double snr_db;
  uint8_t noiseless;
  enum NtnChannel channel;
  uint64_t seed;
} NtnImpairments;

/*
 Output of [`ntn_estimate`].
 */
typedef struct NtnEstimate {
  double coarse_toa_us;
  double fine_toa_us;
  double cfo_hz;
  double t_ph_samples;
  double first_wrap_index;
  /*
   `+1` or `-1`, the sign of the injected offset that was kept.
   */
  int32_t sign_hypothesis;
  uint32_t n_candidates;
  uint32_t chosen;
} NtnEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static nul-terminated string.
 */
const char *ntn_version(void);

/*
 Message of the last failed call on this thread, or null.

 The pointer stays valid until the next failing call on the same thread.
 */
const char *ntn_last_error(void);

/*
 Creates an estimator with default settings for the given format and repetition count.

 # Safety
 `out` must be a valid pointer to writable storage for a handle.
 */
enum NtnStatus ntn_estimator_new(enum NtnFormat format, uint32_t n_rep, struct NtnEstimator **out);

/*
 Creates an estimator from JSON with optional `preamble`, `estimator` and `doppler_map` objects.

 # Safety
 `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum NtnStatus ntn_estimator_from_json(const char *json, struct NtnEstimator **out);

/*
 Releases a handle; null is ignored.

 # Safety
 `h` must come from a constructor of this library and not be used afterwards.
 */
void ntn_estimator_free(struct NtnEstimator *h);

/*
 Number of complex samples in the transmitted preamble.

 # Safety
 `h` must be a live handle or null.
 */
size_t ntn_preamble_len(const struct NtnEstimator *h);

/*
 Number of complex samples produced by [`ntn_simulate`].

 # Safety
 `h` must be a live handle or null.
 */
size_t ntn_received_len(const struct NtnEstimator *h);

/*
 Writes the transmitted preamble as interleaved I/Q.

 # Safety
 `out` must hold `2 * cap` doubles and `len` must be valid.
 */
enum NtnStatus ntn_generate(const struct NtnEstimator *h, double *out, size_t cap, size_t *len);

/*
 Passes the preamble through the impairment chain and writes the received samples.

 The buffer starts at the first transmitted sample and holds
 [`ntn_received_len`] samples.

 # Safety
 `imp` must be valid, `out` must hold `2 * cap` doubles and `len` must be valid.
 */
enum NtnStatus ntn_simulate(const struct NtnEstimator *h,
                            const struct NtnImpairments *imp,
                            double *out,
                            size_t cap,
                            size_t *len);

/*
 Estimates ToA and CFO from `n` interleaved I/Q samples starting at the first transmitted sample.

 # Safety
 `iq` must hold `2 * n` doubles and `out` must be valid.
 */
enum NtnStatus ntn_estimate(const struct NtnEstimator *h,
                            const double *iq,
                            size_t n,
                            double measured_rate_hz_per_s,
                            struct NtnEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTNSYNC_H */
