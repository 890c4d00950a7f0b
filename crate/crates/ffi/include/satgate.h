#ifndef SATGATE_H
#define SATGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SATGATE_OK 0

#define SATGATE_ERR_NULL 1

#define SATGATE_ERR_UTF8 2

#define SATGATE_ERR_IO 3

#define SATGATE_ERR_PARSE 4

#define SATGATE_ERR_SCHEMA 5

#define SATGATE_ERR_VALIDATION 6

#define SATGATE_ERR_BOUNDS 7

#define SATGATE_ERR_DOMAIN 8

#define SATGATE_ERR_SHAPE 9

#define SATGATE_ERR_CHECKPOINT 10

#define SATGATE_ERR_UNDEFINED_METRIC 11

#define SATGATE_ERR_BUFFER 12

#define SATGATE_ERR_OTHER 98

#define SATGATE_ERR_PANIC 99

#define SATGATE_RESPOND 0

#define SATGATE_CLARIFY 1

/**
 * Trained satisfaction predictor loaded from a checkpoint.
 */
typedef struct SatgatePredictor SatgatePredictor;

/**
 * Weak labeler loaded from its JSON model file.
 */
typedef struct SatgateWeakLabeler SatgateWeakLabeler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *satgate_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *satgate_version(void);

/**
 * Loads a predictor checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int satgate_predictor_load(const char *path, struct SatgatePredictor **out);

/**
 * Releases a predictor. Null is ignored.
 *
 * # Safety
 * `predictor` must come from `satgate_predictor_load` and not be used afterwards.
 */
void satgate_predictor_free(struct SatgatePredictor *predictor);

/**
 * Decision threshold stored in the predictor's config.
 *
 * # Safety
 * `predictor` must be a live handle; `out` must be writable.
 */
int satgate_predictor_threshold(const struct SatgatePredictor *predictor, double *out);

/**
 * Satisfaction probability of turn `turn` of a session given as one JSON
 * line, using only that turn and the ones before it.
 *
 * # Safety
 * `predictor` must be a live handle, `session_json` NUL-terminated, `out` writable.
 */
int satgate_predictor_score(const struct SatgatePredictor *predictor, const char *session_json, size_t turn, double *out);

/**
 * Scores every turn of a session into `out[0..capacity]`; the number of
 * turns is written to `out_len` even when `capacity` is too small (in which
 * case `SATGATE_ERR_BUFFER` is returned and `out` is untouched).
 *
 * # Safety
 * `out` must have room for `capacity` doubles (may be null when capacity is 0).
 */
int satgate_predictor_score_session(const struct SatgatePredictor *predictor, const char *session_json, double *out, size_t capacity, size_t *out_len);

/**
 * Loads a weak labeler model file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
int satgate_weak_labeler_load(const char *path, struct SatgateWeakLabeler **out);

/**
 * Releases a weak labeler. Null is ignored.
 *
 * # Safety
 * `labeler` must come from `satgate_weak_labeler_load` and not be used afterwards.
 */
void satgate_weak_labeler_free(struct SatgateWeakLabeler *labeler);

/**
 * Weak label (posterior satisfaction) of turn `turn`, computed from that
 * turn and its neighbours.
 *
 * # Safety
 * `labeler` must be a live handle, `session_json` NUL-terminated, `out` writable.
 */
int satgate_weak_label(const struct SatgateWeakLabeler *labeler, const char *session_json, size_t turn, double *out);

/**
 * Writes `SATGATE_CLARIFY` when `probability < threshold`, else `SATGATE_RESPOND`.
 *
 * # Safety
 * `out_decision` must be writable.
 */
int satgate_gate(double probability, double threshold, int *out_decision);

/**
 * Contextual satisfaction of a clarification turn: `rating_n * rating_next`.
 *
 * # Safety
 * `out` must be writable.
 */
int satgate_cus(double rating_n, double rating_next, double *out);

/**
 * ROC AUC of `scores` against 0/1 `labels`, both of length `n`.
 *
 * # Safety
 * `scores` and `labels` must point to `n` readable elements; `out` must be writable.
 */
int satgate_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SATGATE_H */
