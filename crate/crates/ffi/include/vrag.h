#ifndef VRAG_H
#define VRAG_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VragStatus {
  VRAG_STATUS_OK = 0,
  /**
   * Bad argument or configuration.
   */
  VRAG_STATUS_INVALID = 1,
  /**
   * An external service failed or could not be reached.
   */
  VRAG_STATUS_TRANSPORT = 2,
  /**
   * A file on disk is malformed.
   */
  VRAG_STATUS_CORRUPT = 3,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  VRAG_STATUS_NULL_POINTER = 4,
  /**
   * The caller's buffer is too small; the required length is reported.
   */
  VRAG_STATUS_BUFFER_TOO_SMALL = 5,
  VRAG_STATUS_PANIC = 6,
} VragStatus;

/**
 * A loaded corpus manifest.
 */
typedef struct VragCorpus VragCorpus;

/**
 * A built or loaded video index.
 */
typedef struct VragIndex VragIndex;

/**
 * One retrieval hit: a position usable with [`vrag_index_video_id`] and
 * its cosine score.
 */
typedef struct VragHit {
  size_t position;
  double score;
} VragHit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vrag_version(void);

/**
 * Message for the last failed call on this thread, or null if the last
 * call succeeded. Valid until the next vrag call on the same thread.
 */
const char *vrag_last_error_message(void);

/**
 * Opens a corpus manifest.
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string and `out` a valid
 * pointer.
 */
enum VragStatus vrag_corpus_open(const char *manifest_path, struct VragCorpus **out);

/**
 * # Safety
 * `corpus` must come from [`vrag_corpus_open`] or be null.
 */
size_t vrag_corpus_len(const struct VragCorpus *corpus);

/**
 * # Safety
 * `corpus` must come from [`vrag_corpus_open`] or be null.
 */
size_t vrag_corpus_dim(const struct VragCorpus *corpus);

/**
 * # Safety
 * `corpus` must come from [`vrag_corpus_open`] or be null, and is invalid
 * afterwards.
 */
void vrag_corpus_free(struct VragCorpus *corpus);

/**
 * Builds an index with uniform frame selection.
 *
 * # Safety
 * `corpus` must be a live handle and `out` a valid pointer.
 */
enum VragStatus vrag_index_build(const struct VragCorpus *corpus,
                                 double alpha,
                                 size_t frames_per_video,
                                 bool require_text,
                                 uint64_t seed,
                                 struct VragIndex **out);

/**
 * Loads an index file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VragStatus vrag_index_read(const char *path, struct VragIndex **out);

/**
 * # Safety
 * `index` must be a live handle and `path` a NUL-terminated string.
 */
enum VragStatus vrag_index_write(const struct VragIndex *index, const char *path);

/**
 * # Safety
 * `index` must be a live handle or null.
 */
size_t vrag_index_len(const struct VragIndex *index);

/**
 * # Safety
 * `index` must be a live handle or null.
 */
size_t vrag_index_dim(const struct VragIndex *index);

/**
 * Video id at `position`, or null when out of range. Owned by the index.
 *
 * # Safety
 * `index` must be a live handle or null.
 */
const char *vrag_index_video_id(const struct VragIndex *index, size_t position);

/**
 * Writes the top `k` hits for `query` into `hits`, best first, and their
 * number into `n_hits`. If they do not fit in `capacity`, returns
 * `BufferTooSmall` with the needed length in `n_hits`.
 *
 * # Safety
 * `query` must point to `dim` doubles, `hits` to `capacity` writable
 * [`VragHit`]s, and `n_hits` must be valid.
 */
enum VragStatus vrag_index_retrieve(const struct VragIndex *index,
                                    const double *query,
                                    size_t dim,
                                    size_t k,
                                    struct VragHit *hits,
                                    size_t capacity,
                                    size_t *n_hits);

/**
 * # Safety
 * `index` must be a live handle or null, and is invalid afterwards.
 */
void vrag_index_free(struct VragIndex *index);

/**
 * ROUGE-L F-measure in [0, 1].
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` valid.
 */
enum VragStatus vrag_rouge_l(const char *reference, const char *hypothesis, double *out);

/**
 * Smoothed sentence BLEU-4 in [0, 1].
 *
 * # Safety
 * Both strings must be NUL-terminated and `out` valid.
 */
enum VragStatus vrag_bleu_4(const char *reference, const char *hypothesis, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRAG_H */
