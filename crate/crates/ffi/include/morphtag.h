#ifndef MORPHTAG_H
#define MORPHTAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MtStatus {
  MT_STATUS_OK = 0,
  MT_STATUS_NULL_ARGUMENT = 1,
  MT_STATUS_USAGE = 2,
  MT_STATUS_DATA = 3,
  MT_STATUS_NUMERIC = 4,
  MT_STATUS_IO = 5,
  MT_STATUS_CHECKPOINT = 6,
  MT_STATUS_INVALID_UTF8 = 7,
  MT_STATUS_PANIC = 8,
} MtStatus;

/**
 * A tokenized corpus with gold or predicted labels.
 */
typedef struct MtCorpus MtCorpus;

/**
 * A trained tagger.
 */
typedef struct MtModel MtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *mt_last_error(void);

/**
 * Library version as a static string.
 */
const char *mt_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void mt_string_free(char *s);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MtStatus mt_model_load(const char *path, struct MtModel **out);

/**
 * # Safety
 * `model` must be null or a handle from `mt_model_load`, not yet freed.
 */
void mt_model_free(struct MtModel *model);

/**
 * Writes the model kind name (e.g. `mc+emb-cat`) to `out`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum MtStatus mt_model_kind(const struct MtModel *model, char **out);

/**
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum MtStatus mt_corpus_parse(const char *text, struct MtCorpus **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MtStatus mt_corpus_read(const char *path, struct MtCorpus **out);

/**
 * # Safety
 * `corpus` must be null or a live corpus handle.
 */
void mt_corpus_free(struct MtCorpus *corpus);

/**
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum MtStatus mt_corpus_token_count(const struct MtCorpus *corpus, size_t *out);

/**
 * Serializes the corpus as CoNLL-U.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum MtStatus mt_corpus_to_conllu(const struct MtCorpus *corpus, char **out);

/**
 * Replaces every token's candidates with lexicon analyses.
 *
 * # Safety
 * `corpus` must be a live handle; `lexicon_path` a NUL-terminated string.
 */
enum MtStatus mt_corpus_attach_lexicon(struct MtCorpus *corpus, const char *lexicon_path);

/**
 * Predicts labels for `input` into a new corpus handle.
 *
 * # Safety
 * `model` and `input` must be live handles; `out` must be writable.
 */
enum MtStatus mt_model_tag(const struct MtModel *model,
                           const struct MtCorpus *input,
                           struct MtCorpus **out);

/**
 * Full-tag accuracy and macro-averaged per-category F1, in percent.
 *
 * # Safety
 * `gold` and `pred` must be live handles; both out-pointers writable.
 */
enum MtStatus mt_evaluate(const struct MtCorpus *gold,
                          const struct MtCorpus *pred,
                          double *out_accuracy,
                          double *out_macro_f1);

/**
 * Maximum relative gradient error of a tiny random model of `kind`.
 *
 * # Safety
 * `kind` must be a NUL-terminated string; `out` must be writable.
 */
enum MtStatus mt_gradcheck(const char *kind, double eps, uint64_t seed, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MORPHTAG_H */
