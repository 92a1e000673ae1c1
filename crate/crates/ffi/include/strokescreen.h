#ifndef STROKESCREEN_H
#define STROKESCREEN_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  SS_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument is out of range or not valid UTF-8.
   */
  SS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or a model file is malformed.
   */
  SS_STATUS_IO = 3,
  /**
   * Input bytes could not be decoded for their modality.
   */
  SS_STATUS_DECODE = 4,
  /**
   * A model rejected its input.
   */
  SS_STATUS_MODEL = 5,
  /**
   * Rust code panicked; the message is in the last error.
   */
  SS_STATUS_PANIC = 6,
} SsStatus;

/**
 * Loaded detector and fusion models.
 */
typedef struct SsEngine SsEngine;

typedef struct SsVitals {
  int64_t timestamp_ms;
  double systolic;
  double diastolic;
  double heart_rate;
  double spo2;
} SsVitals;

/**
 * Per-modality confidences; NaN marks a missing modality.
 */
typedef struct SsFusionInput {
  double vocal;
  double vascular;
  double retina;
  double face;
} SsFusionInput;

typedef struct SsDiagnosis {
  bool at_risk;
  double risk_percent;
  /**
   * In the order vocal, vascular, retina, face.
   */
  double contributions[4];
  /**
   * Bit i set when coordinate i was imputed.
   */
  uint32_t imputed_mask;
} SsDiagnosis;

/**
 * Undefined ratios are NaN.
 */
typedef struct SsMetrics {
  double precision;
  double sensitivity;
  double f_beta;
  double accuracy;
} SsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *ss_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Loads `<modality>.ssmd` for all five modalities from `models_dir`.
 *
 * # Safety
 * `models_dir` must be a NUL-terminated string and `out` writable.
 */
enum SsStatus ss_engine_open(const char *models_dir, struct SsEngine **out);

/**
 * Releases an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from [`ss_engine_open`] and not be used afterwards.
 */
void ss_engine_free(struct SsEngine *engine);

/**
 * Slurred-speech confidence for a 16-bit PCM WAV file.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum SsStatus ss_voice_confidence(const struct SsEngine *engine,
                                  const uint8_t *data,
                                  size_t len,
                                  double *out);

/**
 * Facial-paralysis confidence for a 68-point landmark file.
 *
 * # Safety
 * As for [`ss_voice_confidence`].
 */
enum SsStatus ss_face_confidence(const struct SsEngine *engine,
                                 const uint8_t *data,
                                 size_t len,
                                 double *out);

/**
 * Retinopathy confidence for a binary PGM or PPM image.
 *
 * # Safety
 * As for [`ss_voice_confidence`].
 */
enum SsStatus ss_retina_confidence(const struct SsEngine *engine,
                                   const uint8_t *data,
                                   size_t len,
                                   double *out);

/**
 * Vascular-risk confidence for one vitals sample.
 *
 * # Safety
 * `sample` must be readable and `out` writable.
 */
enum SsStatus ss_vascular_confidence(const struct SsEngine *engine,
                                     const struct SsVitals *sample,
                                     double *out);

/**
 * Fuses the confidences into a diagnosis. Vascular is required; other
 * missing (NaN) modalities are imputed.
 *
 * # Safety
 * `input` must be readable and `out` writable.
 */
enum SsStatus ss_fuse(const struct SsEngine *engine,
                      const struct SsFusionInput *input,
                      struct SsDiagnosis *out);

/**
 * Precision, sensitivity, F-beta and accuracy of a confusion matrix.
 *
 * # Safety
 * `out` must be writable.
 */
enum SsStatus ss_compute_metrics(uint64_t tp,
                                 uint64_t fp,
                                 uint64_t fn_,
                                 uint64_t tn,
                                 struct SsMetrics *out);

/**
 * Harmonic mean of precision and sensitivity; zero if either is zero.
 */
double ss_f_score(double precision, double sensitivity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STROKESCREEN_H */
