#ifndef SEMSYNGTN_H
#define SEMSYNGTN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SsgStatus {
  SSG_STATUS_OK = 0,
  SSG_STATUS_NULL_POINTER = 1,
  SSG_STATUS_INVALID_UTF8 = 2,
  SSG_STATUS_IO = 3,
  SSG_STATUS_CONFIG = 4,
  SSG_STATUS_CORPUS = 5,
  SSG_STATUS_NUMERIC = 6,
  SSG_STATUS_TRAIN = 7,
  SSG_STATUS_OUT_OF_RANGE = 8,
  SSG_STATUS_BUFFER_TOO_SMALL = 9,
  SSG_STATUS_PANIC = 10,
} SsgStatus;

/**
 * Training configuration.
 */
typedef struct SsgConfig SsgConfig;

/**
 * Loaded or generated corpus.
 */
typedef struct SsgCorpus SsgCorpus;

/**
 * Trained model.
 */
typedef struct SsgModel SsgModel;

/**
 * Per-sentence word vectors for models built without a static table.
 */
typedef struct SsgVectors SsgVectors;

/**
 * Precision, recall and F1 in percent, plus the instance count.
 */
typedef struct SsgScores {
  double precision;
  double recall;
  double f1;
  size_t instances;
} SsgScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call into this library on the same thread.
 */
const char *ssg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ssg_version(void);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SsgStatus ssg_config_new(struct SsgConfig **out);

/**
 * Reads a flat `key = value` config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsgStatus ssg_config_load(const char *path, struct SsgConfig **out);

/**
 * Sets one key, using the same syntax as the config file.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum SsgStatus ssg_config_set(struct SsgConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void ssg_config_free(struct SsgConfig *cfg);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsgStatus ssg_corpus_load(const char *path, struct SsgCorpus **out);

/**
 * Synthetic corpus with default generator settings.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SsgStatus ssg_corpus_generate(uint64_t seed, size_t n_sentences, struct SsgCorpus **out);

/**
 * # Safety
 * `corpus` must come from this library; `path` must be a NUL-terminated
 * string.
 */
enum SsgStatus ssg_corpus_save(const struct SsgCorpus *corpus, const char *path);

/**
 * Number of sentences, or 0 for null.
 *
 * # Safety
 * `corpus` must come from this library or be null.
 */
size_t ssg_corpus_len(const struct SsgCorpus *corpus);

/**
 * Number of (candidate, trigger) instances, or 0 for null.
 *
 * # Safety
 * `corpus` must come from this library or be null.
 */
size_t ssg_corpus_instance_count(const struct SsgCorpus *corpus);

/**
 * # Safety
 * `corpus` must come from this library or be null.
 */
void ssg_corpus_free(struct SsgCorpus *corpus);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsgStatus ssg_vectors_load(const char *path, struct SsgVectors **out);

/**
 * # Safety
 * `vectors` must come from this library or be null.
 */
void ssg_vectors_free(struct SsgVectors *vectors);

/**
 * Trains with the corpus and embedding paths named in `cfg` and returns the
 * best-dev model.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum SsgStatus ssg_model_train(const struct SsgConfig *cfg, struct SsgModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsgStatus ssg_model_load(const char *path, struct SsgModel **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be a NUL-terminated
 * string.
 */
enum SsgStatus ssg_model_save(const struct SsgModel *model, const char *path);

/**
 * Number of role labels including `None`, or 0 for null.
 *
 * # Safety
 * `model` must come from this library or be null.
 */
size_t ssg_model_role_count(const struct SsgModel *model);

/**
 * Copies the NUL-terminated name of role `index` into `buf`. `len`
 * receives the required size including the terminator, so a first call
 * with `cap = 0` can size the buffer.
 *
 * # Safety
 * `model` must come from this library, `buf` must hold `cap` bytes (or be
 * null when `cap` is 0), and `len` must be a valid pointer.
 */
enum SsgStatus ssg_model_role_name(const struct SsgModel *model,
                                   size_t index,
                                   char *buf,
                                   size_t cap,
                                   size_t *len);

/**
 * Predicted role index for instance `index` of `corpus` (instances are
 * numbered sentence by sentence, event by event, entity by entity).
 *
 * # Safety
 * `model` and `corpus` must come from this library, `vectors` must come from
 * this library or be null, and `role` must be a valid pointer.
 */
enum SsgStatus ssg_model_predict(const struct SsgModel *model,
                                 const struct SsgCorpus *corpus,
                                 const struct SsgVectors *vectors,
                                 size_t index,
                                 size_t *role);

/**
 * Micro P/R/F1 over the non-`None` roles of `corpus`.
 *
 * # Safety
 * `model` and `corpus` must come from this library, `vectors` must come from
 * this library or be null, and `out` must be a valid pointer.
 */
enum SsgStatus ssg_model_evaluate(const struct SsgModel *model,
                                  const struct SsgCorpus *corpus,
                                  const struct SsgVectors *vectors,
                                  struct SsgScores *out);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void ssg_model_free(struct SsgModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMSYNGTN_H */
