#ifndef SETSEG_H
#define SETSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SetsegStatus {
  SETSEG_STATUS_OK = 0,
  SETSEG_STATUS_NULL_POINTER = 1,
  SETSEG_STATUS_INVALID_ARGUMENT = 2,
  SETSEG_STATUS_IO = 3,
  SETSEG_STATUS_PARSE = 4,
  SETSEG_STATUS_VALIDATION = 5,
  SETSEG_STATUS_INFEASIBLE = 6,
  SETSEG_STATUS_NUMERIC = 7,
  SETSEG_STATUS_PANIC = 8,
} SetsegStatus;

typedef enum SetsegLengthKind {
  SETSEG_LENGTH_KIND_POISSON = 0,
  SETSEG_LENGTH_KIND_GAUSSIAN = 1,
  SETSEG_LENGTH_KIND_BOX = 2,
  SETSEG_LENGTH_KIND_TRIANGLE = 3,
} SetsegLengthKind;

// Class table read from a `classes.txt` file.
typedef struct SetsegClasses SetsegClasses;

// Label automaton.
typedef struct SetsegGrammar SetsegGrammar;

// Per-class segment length distributions.
typedef struct SetsegLengths SetsegLengths;

// Trained frame model with its class prior.
typedef struct SetsegScorer SetsegScorer;

// Result of a decode call.
typedef struct SetsegSegmentation SetsegSegmentation;

// Decoder options. `max_len == 0` picks the length model's default limit,
// or the whole video without a length model. `beam == 0` decodes exactly.
typedef struct SetsegDecodeOptions {
  size_t stride;
  size_t max_len;
  size_t beam;
} SetsegDecodeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into the library on this thread.
const char *setseg_last_error(void);

enum SetsegStatus setseg_classes_load(const char *path, struct SetsegClasses **out);

// Number of classes, or 0 for NULL.
size_t setseg_classes_count(const struct SetsegClasses *classes);

// Id of `name`, or -1 if unknown or on NULL arguments.
int64_t setseg_classes_id(const struct SetsegClasses *classes, const char *name);

void setseg_classes_free(struct SetsegClasses *classes);

enum SetsegStatus setseg_grammar_load(const char *path,
                                      const struct SetsegClasses *classes,
                                      struct SetsegGrammar **out);

// Grammar accepting exactly the given sequences. `offsets` has `count + 1`
// entries delimiting each sequence inside `labels`.
enum SetsegStatus setseg_grammar_from_sequences(const uint32_t *labels,
                                                const size_t *offsets,
                                                size_t count,
                                                struct SetsegGrammar **out);

// Grammar accepting every non-empty sequence over `labels`.
enum SetsegStatus setseg_grammar_free_loop(const uint32_t *labels,
                                           size_t count,
                                           struct SetsegGrammar **out);

size_t setseg_grammar_num_states(const struct SetsegGrammar *grammar);

enum SetsegStatus setseg_grammar_accepts(const struct SetsegGrammar *grammar,
                                         const uint32_t *labels,
                                         size_t len,
                                         bool *out_accepted);

void setseg_grammar_free(struct SetsegGrammar *grammar);

enum SetsegStatus setseg_lengths_load(const char *path,
                                      const struct SetsegClasses *classes,
                                      struct SetsegLengths **out);

enum SetsegStatus setseg_lengths_new(enum SetsegLengthKind kind,
                                     const double *lambda,
                                     const double *sigma,
                                     size_t num_classes,
                                     struct SetsegLengths **out);

// `ln p(len | class)`; `-inf` outside the support.
enum SetsegStatus setseg_lengths_log_pmf(const struct SetsegLengths *lengths,
                                         size_t class_,
                                         size_t len,
                                         double *out_value);

void setseg_lengths_free(struct SetsegLengths *lengths);

enum SetsegStatus setseg_scorer_load(const char *path, struct SetsegScorer **out);

size_t setseg_scorer_num_classes(const struct SetsegScorer *scorer);

size_t setseg_scorer_dim(const struct SetsegScorer *scorer);

// Writes the `frames x classes` row-major log-score matrix for row-major
// `frames x dim` features into `out_scores`, which must hold
// `frames * setseg_scorer_num_classes(scorer)` values.
enum SetsegStatus setseg_scorer_frame_scores(const struct SetsegScorer *scorer,
                                             const float *features,
                                             size_t frames,
                                             size_t dim,
                                             double *out_scores,
                                             size_t out_len);

void setseg_scorer_free(struct SetsegScorer *scorer);

// Decodes a row-major `frames x classes` log-score matrix. `lengths` may be
// NULL to decode without a length model. With `allowed` non-NULL the
// search is restricted to those classes, falling back to all sequences
// over them when the grammar has none.
enum SetsegStatus setseg_decode(const double *scores,
                                size_t frames,
                                size_t classes,
                                const struct SetsegGrammar *grammar,
                                const struct SetsegLengths *lengths,
                                struct SetsegDecodeOptions options,
                                const uint32_t *allowed,
                                size_t allowed_len,
                                struct SetsegSegmentation **out);

size_t setseg_segmentation_len(const struct SetsegSegmentation *seg);

double setseg_segmentation_log_score(const struct SetsegSegmentation *seg);

// Class and length of segment `index`.
enum SetsegStatus setseg_segmentation_get(const struct SetsegSegmentation *seg,
                                          size_t index,
                                          uint32_t *out_class,
                                          size_t *out_len);

void setseg_segmentation_free(struct SetsegSegmentation *seg);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SETSEG_H */
