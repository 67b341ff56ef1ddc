#ifndef HALLUC_H
#define HALLUC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define HL_OK 0

/**
 * A required pointer was null.
 */
#define HL_ERR_NULL -1

/**
 * A string argument was not valid UTF-8.
 */
#define HL_ERR_UTF8 -2

/**
 * The input was readable but semantically invalid.
 */
#define HL_ERR_INVALID -3

/**
 * Tagged text could not be parsed.
 */
#define HL_ERR_PARSE -4

/**
 * A file could not be read.
 */
#define HL_ERR_IO -5

/**
 * Opaque entity-grounding detector.
 */
typedef struct HlDetector HlDetector;

/**
 * A hallucination span in character offsets, end exclusive. `class_`
 * indexes into `hl_class_name`; -1 means no class (class-agnostic).
 */
typedef struct HlSpan {
  uint64_t start;
  uint64_t end;
  int32_t class_;
} HlSpan;

/**
 * Partial-match tallies; see `hl_eval_scores` for derived P/R/F1.
 */
typedef struct HlEvalCounts {
  uint64_t correct;
  uint64_t partial;
  uint64_t incorrect;
  uint64_t missed;
  uint64_t spurious;
} HlEvalCounts;

/**
 * A precision/recall/F1 triple.
 */
typedef struct HlPrf {
  double precision;
  double recall;
  double f1;
} HlPrf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the most recent failing call on this thread, or null.
 * Valid until the next failing call on the same thread.
 */
const char *hl_last_error(void);

/**
 * # Safety
 * `ptr` must come from this library and not have been freed already.
 */
void hl_string_free(char *ptr);

/**
 * Number of hallucination classes (valid indices are 0..count).
 */
int32_t hl_class_count(void);

/**
 * Static canonical name for a class index, or null if out of range.
 */
const char *hl_class_name(int32_t index);

/**
 * Resolve a label name to its class index, or -1 if unknown.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string.
 */
int32_t hl_class_parse(const char *name);

/**
 * # Safety
 * `ptr`/`len` must be a pair previously produced by this library.
 */
void hl_spans_free(struct HlSpan *ptr, uintptr_t len);

/**
 * Strip inline `<error>` tags from `text`. On success `out_plain`
 * receives the plain text and `out_spans`/`out_len` the tagged regions.
 *
 * # Safety
 * `text` must be NUL-terminated; the out pointers must be valid.
 */
int32_t hl_parse_tagged(const char *text,
                        int32_t class_aware,
                        char **out_plain,
                        struct HlSpan **out_spans,
                        uintptr_t *out_len);

/**
 * Re-insert `<error>` tags into `plain` at the given spans.
 *
 * # Safety
 * `plain` must be NUL-terminated; `spans` must point at `len` elements.
 */
int32_t hl_render_tagged(const char *plain,
                         const struct HlSpan *spans,
                         uintptr_t len,
                         char **out_text);

/**
 * Score predicted spans against gold spans for one document.
 *
 * # Safety
 * Span pointers must cover their stated lengths; `out` must be valid.
 */
int32_t hl_match_spans(const struct HlSpan *gold,
                       uintptr_t gold_len,
                       const struct HlSpan *pred,
                       uintptr_t pred_len,
                       int32_t class_aware,
                       struct HlEvalCounts *out);

/**
 * Precision, recall, and F1 from partial-match tallies.
 *
 * # Safety
 * All pointers must be valid.
 */
int32_t hl_eval_scores(const struct HlEvalCounts *counts,
                       double *out_precision,
                       double *out_recall,
                       double *out_f1);

/**
 * Interval Krippendorff's alpha over ragged units. `values` holds all
 * ratings back to back; `unit_lens[i]` values belong to unit `i`.
 * `out_degenerate` is set to 1 when expected disagreement is zero.
 *
 * # Safety
 * `values` must hold the sum of `unit_lens`; out pointers must be valid.
 */
int32_t hl_krippendorff_interval(const double *values,
                                 const uintptr_t *unit_lens,
                                 uintptr_t n_units,
                                 double *out_alpha,
                                 int32_t *out_degenerate);

/**
 * ROUGE-N of `candidate` against `reference`.
 *
 * # Safety
 * Text pointers must be NUL-terminated; `out` must be valid.
 */
int32_t hl_rouge_n(const char *candidate, const char *reference, uintptr_t n, struct HlPrf *out);

/**
 * ROUGE-L of `candidate` against `reference`.
 *
 * # Safety
 * Text pointers must be NUL-terminated; `out` must be valid.
 */
int32_t hl_rouge_l(const char *candidate, const char *reference, struct HlPrf *out);

/**
 * SARI of `candidate` rewriting `source` against `n_refs` references,
 * on a 0-100 scale.
 *
 * # Safety
 * `references` must point at `n_refs` NUL-terminated strings.
 */
int32_t hl_sari(const char *source,
                const char *candidate,
                const char *const *references,
                uintptr_t n_refs,
                double *out);

/**
 * Build a detector from a lexicon TSV and an optional embedding file
 * (pass null to disable embedding matching). Returns null on failure
 * with `hl_last_error` set.
 *
 * # Safety
 * Path pointers must be NUL-terminated (or null where allowed).
 */
struct HlDetector *hl_detector_new(const char *lexicon_path,
                                   const char *embeddings_path,
                                   double tau);

/**
 * Flag summary entities unsupported by the context. Spans come back in
 * summary character offsets via `out_spans`/`out_len`.
 *
 * # Safety
 * `detector` must come from `hl_detector_new`; texts NUL-terminated.
 */
int32_t hl_detector_detect(const struct HlDetector *detector,
                           const char *context,
                           const char *summary,
                           struct HlSpan **out_spans,
                           uintptr_t *out_len);

/**
 * # Safety
 * `detector` must come from `hl_detector_new` and not be freed twice.
 */
void hl_detector_free(struct HlDetector *detector);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HALLUC_H */
