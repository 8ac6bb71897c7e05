#ifndef STRESSWATCH_H
#define STRESSWATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success; the values are part of the ABI.
 */
typedef enum SwStatus {
  SW_STATUS_OK = 0,
  SW_STATUS_NULL_ARGUMENT = 1,
  SW_STATUS_INVALID_UTF8 = 2,
  SW_STATUS_IO = 3,
  SW_STATUS_CORRUPT_ARTIFACT = 4,
  SW_STATUS_VERSION_MISMATCH = 5,
  SW_STATUS_DIMENSION_MISMATCH = 6,
  SW_STATUS_INVALID_ARGUMENT = 7,
  SW_STATUS_OFFSET_OUT_OF_RANGE = 8,
  SW_STATUS_OVERSIZE = 9,
  SW_STATUS_CORRUPT_SEGMENT = 10,
  SW_STATUS_INVALID_NAME = 11,
  SW_STATUS_PANIC = 12,
  SW_STATUS_OTHER = 13,
} SwStatus;

/**
 * Loaded model artifact.
 */
typedef struct SwModel SwModel;

/**
 * Open log topic.
 */
typedef struct SwTopic SwTopic;

/**
 * Binary classification metrics, all in [0, 1].
 */
typedef struct SwMetrics {
  double accuracy;
  double f1_stress;
  double f1_nonstress;
  double f1_macro;
} SwMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *sw_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void sw_string_free(char *s);

/**
 * # Safety
 * `buf`/`len` must be NULL/0 or a buffer returned by this library and not yet freed.
 */
void sw_bytes_free(uint8_t *buf, size_t len);

/**
 * Loads a model artifact from `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SwStatus sw_model_load(const char *path, struct SwModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle from [`sw_model_load`] not yet freed.
 */
void sw_model_free(struct SwModel *model);

/**
 * Borrowed model id; valid while the handle lives. NULL for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
const char *sw_model_id(const struct SwModel *model);

/**
 * Length of the feature vector the classifier expects; 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t sw_model_output_dim(const struct SwModel *model);

/**
 * Classifies a post body. `domain` may be NULL (treated as unknown).
 * `out_score` may be NULL.
 *
 * # Safety
 * `model` must be a live handle; strings NUL-terminated; `out_label` writable.
 */
enum SwStatus sw_model_predict_text(const struct SwModel *model,
                                    const char *domain,
                                    const char *text,
                                    uint8_t *out_label,
                                    double *out_score);

/**
 * Classifies a post given as one JSON object (the replay line format).
 *
 * # Safety
 * As for [`sw_model_predict_text`].
 */
enum SwStatus sw_model_predict_json(const struct SwModel *model,
                                    const char *post_json,
                                    uint8_t *out_label,
                                    double *out_score);

/**
 * Classifies an already scaled feature vector of `len` values.
 *
 * # Safety
 * `features` must point to `len` readable doubles.
 */
enum SwStatus sw_model_predict_features(const struct SwModel *model,
                                        const double *features,
                                        size_t len,
                                        uint8_t *out_label,
                                        double *out_score);

/**
 * Cleans, tokenizes and removes built-in stopwords; returns space-joined
 * tokens in `*out` (free with [`sw_string_free`]).
 *
 * # Safety
 * `text` must be NUL-terminated; `out` writable.
 */
enum SwStatus sw_preprocess(const char *text, char **out);

/**
 * Opens (creating if needed) topic `name` under `root` with default settings.
 *
 * # Safety
 * Strings NUL-terminated; `out` writable.
 */
enum SwStatus sw_topic_open(const char *root, const char *name, struct SwTopic **out);

/**
 * Flushes and closes the topic.
 *
 * # Safety
 * `topic` must be NULL or a handle from [`sw_topic_open`] not yet freed.
 */
void sw_topic_free(struct SwTopic *topic);

/**
 * Next offset to be assigned; 0 for a NULL handle.
 *
 * # Safety
 * `topic` must be NULL or a live handle.
 */
uint64_t sw_topic_next_offset(const struct SwTopic *topic);

/**
 * Appends `len` bytes and flushes; the assigned offset goes to `out_offset`
 * when it is not NULL.
 *
 * # Safety
 * `payload` must point to `len` readable bytes.
 */
enum SwStatus sw_topic_append(const struct SwTopic *topic,
                              const uint8_t *payload,
                              size_t len,
                              uint64_t *out_offset);

/**
 * Reads the payload at `offset` into a new buffer (free with [`sw_bytes_free`]).
 *
 * # Safety
 * `out_buf` and `out_len` must be writable.
 */
enum SwStatus sw_topic_read(const struct SwTopic *topic,
                            uint64_t offset,
                            uint8_t **out_buf,
                            size_t *out_len);

/**
 * Records `offset` as the next offset `group` will consume.
 *
 * # Safety
 * `group` must be NUL-terminated.
 */
enum SwStatus sw_topic_commit(const struct SwTopic *topic, const char *group, uint64_t offset);

/**
 * Committed offset for `group`, 0 if it never committed.
 *
 * # Safety
 * `group` must be NUL-terminated; `out` writable.
 */
enum SwStatus sw_topic_committed(const struct SwTopic *topic, const char *group, uint64_t *out);

/**
 * Metrics for `n` predictions against `n` 0/1 labels, stress being label 1.
 *
 * # Safety
 * `preds` and `truth` must each point to `n` readable bytes; `out` writable.
 */
enum SwStatus sw_metrics(const uint8_t *preds,
                         const uint8_t *truth,
                         size_t n,
                         struct SwMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STRESSWATCH_H */
