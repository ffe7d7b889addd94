#ifndef FACEVAL_H
#define FACEVAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes of every fallible call.
 */
typedef enum FacevalStatus {
  FACEVAL_STATUS_OK = 0,
  FACEVAL_STATUS_NULL_ARGUMENT = 1,
  FACEVAL_STATUS_INVALID_UTF8 = 2,
  FACEVAL_STATUS_IO = 3,
  FACEVAL_STATUS_PARSE = 4,
  FACEVAL_STATUS_INTEGRITY = 5,
  FACEVAL_STATUS_DOMAIN = 6,
  FACEVAL_STATUS_VERSION = 7,
  FACEVAL_STATUS_TAGGING = 8,
  FACEVAL_STATUS_SCORER_UNAVAILABLE = 9,
  FACEVAL_STATUS_SCORER_PROTOCOL = 10,
  FACEVAL_STATUS_PROVIDER = 11,
  FACEVAL_STATUS_MISSING_SCORE = 12,
  FACEVAL_STATUS_UNDEFINED_CORRELATION = 13,
  FACEVAL_STATUS_PANIC = 99,
} FacevalStatus;

/**
 * A loaded dialogue corpus.
 */
typedef struct FacevalCorpus FacevalCorpus;

/**
 * A probe corpus (positive and negative summaries per dialogue).
 */
typedef struct FacevalProbes FacevalProbes;

/**
 * Factuality scores of one model on a probe corpus.
 */
typedef struct FacevalReport FacevalReport;

/**
 * Scores one summary. Sets `*logprobs` to `*len` token log-probabilities
 * that stay valid until the callback is invoked again or the scoring call
 * returns, and returns 0. A non-zero return marks the pair as failed.
 * Invocations never overlap, but may come from a thread other than the
 * caller's.
 */
typedef int (*FacevalScoreFn)(void *user_data,
                              const char *pair_id,
                              const char *dialogue,
                              const char *summary,
                              const double **logprobs,
                              size_t *len);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *faceval_last_error(void);

/**
 * Library version as a static string.
 */
const char *faceval_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void faceval_string_free(char *s);

/**
 * Loads a JSON-lines corpus. `split` is "train", "val" or "test".
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum FacevalStatus faceval_corpus_load(const char *path,
                                       const char *split,
                                       struct FacevalCorpus **out);

/**
 * Number of dialogues; 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t faceval_corpus_len(const struct FacevalCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle; it is invalid afterwards.
 */
void faceval_corpus_free(struct FacevalCorpus *corpus);

/**
 * Builds probes with the default configuration, keeping at most
 * `cap_per_kind` negatives per kind per dialogue.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum FacevalStatus faceval_probes_build(const struct FacevalCorpus *corpus,
                                        uint64_t seed,
                                        size_t cap_per_kind,
                                        struct FacevalProbes **out);

/**
 * Reads a probe file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum FacevalStatus faceval_probes_load(const char *path, struct FacevalProbes **out);

/**
 * Writes a probe file.
 *
 * # Safety
 * `probes` must be a live handle; `path` must be NUL-terminated.
 */
enum FacevalStatus faceval_probes_save(const struct FacevalProbes *probes, const char *path);

/**
 * The probe file text; free with [`faceval_string_free`].
 *
 * # Safety
 * `probes` must be a live handle; `out` must be writable.
 */
enum FacevalStatus faceval_probes_to_json(const struct FacevalProbes *probes, char **out);

/**
 * Number of probe sets (one per dialogue); 0 for a null handle.
 *
 * # Safety
 * `probes` must be null or a live handle.
 */
size_t faceval_probes_len(const struct FacevalProbes *probes);

/**
 * Negatives of one kind ("SS", "ES", "PS", "DS", "NS", "NG"), or of all
 * kinds when `kind` is null.
 *
 * # Safety
 * `probes` must be a live handle; `kind` null or NUL-terminated.
 */
enum FacevalStatus faceval_probes_negative_count(const struct FacevalProbes *probes,
                                                 const char *kind,
                                                 size_t *out);

/**
 * # Safety
 * `probes` must be null or a live handle; it is invalid afterwards.
 */
void faceval_probes_free(struct FacevalProbes *probes);

/**
 * Scores every probe summary through `callback` and aggregates the
 * factuality score with length penalty `alpha`.
 *
 * # Safety
 * `probes` must be a live handle, `callback` must follow the
 * [`FacevalScoreFn`] contract, and `out` must be writable.
 */
enum FacevalStatus faceval_score_probes(const struct FacevalProbes *probes,
                                        FacevalScoreFn callback,
                                        void *user_data,
                                        double alpha,
                                        struct FacevalReport **out);

/**
 * Scores with a built-in model-free scorer: "oracle", "anti-oracle",
 * "noisy:P:SEED", "uniform:SEED" or "lexical".
 *
 * # Safety
 * `probes` must be a live handle; `spec` NUL-terminated; `out` writable.
 */
enum FacevalStatus faceval_score_probes_mock(const struct FacevalProbes *probes,
                                             const char *spec,
                                             double alpha,
                                             struct FacevalReport **out);

/**
 * Overall factuality score in [0, 1].
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum FacevalStatus faceval_report_fs(const struct FacevalReport *report, double *out);

/**
 * Factuality score restricted to one negative kind. Fails with
 * `Domain` when no scored dialogue has negatives of that kind.
 *
 * # Safety
 * `report` must be a live handle; `kind` NUL-terminated; `out` writable.
 */
enum FacevalStatus faceval_report_fs_kind(const struct FacevalReport *report,
                                          const char *kind,
                                          double *out);

/**
 * Dialogues that entered the score; 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t faceval_report_dialogues_used(const struct FacevalReport *report);

/**
 * The full report as JSON; free with [`faceval_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum FacevalStatus faceval_report_to_json(const struct FacevalReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a live handle; it is invalid afterwards.
 */
void faceval_report_free(struct FacevalReport *report);

/**
 * Sum of `len` log-probabilities divided by `len^alpha`.
 *
 * # Safety
 * `logprobs` must point to `len` readable values; `out` writable.
 */
enum FacevalStatus faceval_generation_score(const double *logprobs,
                                            size_t len,
                                            double alpha,
                                            double *out);

/**
 * Spearman rank correlation of two vectors of length `len` (>= 3).
 *
 * # Safety
 * `x` and `y` must point to `len` readable values; `out` writable.
 */
enum FacevalStatus faceval_spearman(const double *x, const double *y, size_t len, double *out);

/**
 * ROUGE-n F-measure for n = 1 or 2.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` writable.
 */
enum FacevalStatus faceval_rouge_n(const char *candidate,
                                   const char *reference,
                                   size_t n,
                                   double *out);

/**
 * ROUGE-L F-measure.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` writable.
 */
enum FacevalStatus faceval_rouge_l(const char *candidate, const char *reference, double *out);

/**
 * Sentence BLEU-4 against `n_references` references.
 *
 * # Safety
 * `references` must point to `n_references` NUL-terminated strings;
 * `out` writable.
 */
enum FacevalStatus faceval_bleu4(const char *candidate,
                                 const char *const *references,
                                 size_t n_references,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACEVAL_H */
