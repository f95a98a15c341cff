#ifndef DPPAL_H
#define DPPAL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  DPPAL_STATUS_OK = 0,
  DPPAL_STATUS_NULL_POINTER = 1,
  DPPAL_STATUS_INVALID_ARGUMENT = 2,
  DPPAL_STATUS_PARSE = 3,
  DPPAL_STATUS_NUMERIC = 4,
  DPPAL_STATUS_CONFIG = 5,
  DPPAL_STATUS_IO = 6,
  DPPAL_STATUS_STATE = 7,
  DPPAL_STATUS_BUFFER_TOO_SMALL = 8,
  DPPAL_STATUS_PANIC = 9,
} DppalStatus;

/**
 * A CoNLL-U corpus.
 */
typedef struct DppalCorpus DppalCorpus;

/**
 * Quality-diversity selection kernel.
 */
typedef struct DppalKernel DppalKernel;

/**
 * Results of a finished experiment.
 */
typedef struct DppalReport DppalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next dppal call on the same thread.
 */
const char *dppal_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dppal_version(void);

/**
 * Arc marginals and log-partition of the distribution over trees whose
 * arc weights are the column-softmax probabilities of `log_scores`.
 * `log_scores` and `out_marginals` hold `(n + 1) * n` entries.
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
DppalStatus dppal_arc_marginals(size_t n,
                                const double *log_scores,
                                bool single_root,
                                double *out_marginals,
                                double *out_log_z);

/**
 * Maximum spanning arborescence of `log_scores`; writes `n` heads.
 *
 * # Safety
 * Buffers must be valid for the stated lengths.
 */
DppalStatus dppal_decode_cle(size_t n,
                             const double *log_scores,
                             bool single_root,
                             size_t *out_heads);

/**
 * Intra-batch average and minimal cosine distance of `count` row-major
 * feature vectors of length `dim`.
 *
 * # Safety
 * `features` must hold `count * dim` values.
 */
DppalStatus dppal_ibad_ibmd(size_t count,
                            size_t dim,
                            const double *features,
                            double *out_ibad,
                            double *out_ibmd);

/**
 * Build a kernel from `count` qualities, row-major features of length
 * `dim` (normalized internally) and item sizes.
 *
 * # Safety
 * Buffers must be valid for the stated lengths; `out` receives a handle
 * owned by the caller.
 */
DppalStatus dppal_kernel_new(size_t count,
                             size_t dim,
                             const double *quality,
                             const double *features,
                             const size_t *sizes,
                             DppalKernel **out);

/**
 * # Safety
 * `kernel` must come from [`dppal_kernel_new`] and not be used afterwards.
 */
void dppal_kernel_free(DppalKernel *kernel);

/**
 * `ln det` of the kernel restricted to `subset`.
 *
 * # Safety
 * `kernel` must be a live handle and `subset` hold `len` indices.
 */
DppalStatus dppal_kernel_log_det(const DppalKernel *kernel,
                                 const size_t *subset,
                                 size_t len,
                                 double *out);

/**
 * Greedy MAP under `budget`. Writes up to `capacity` item indices in
 * selection order; `out_len` receives the full selection length and
 * `out_fallback` whether the quality fallback was used. Returns
 * `BufferTooSmall` when `capacity` is short.
 *
 * # Safety
 * `kernel` must be a live handle and `out_items` hold `capacity` slots.
 */
DppalStatus dppal_greedy_map(const DppalKernel *kernel,
                             size_t budget,
                             size_t *out_items,
                             size_t capacity,
                             size_t *out_len,
                             bool *out_fallback);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` receives an owned handle.
 */
DppalStatus dppal_corpus_read(const char *path, DppalCorpus **out);

/**
 * # Safety
 * `corpus` must be a live handle or NULL.
 */
size_t dppal_corpus_sentences(const DppalCorpus *corpus);

/**
 * # Safety
 * `corpus` must be a live handle or NULL.
 */
size_t dppal_corpus_tokens(const DppalCorpus *corpus);

/**
 * # Safety
 * `corpus` must come from [`dppal_corpus_read`] and not be used afterwards.
 */
void dppal_corpus_free(DppalCorpus *corpus);

/**
 * Run an experiment. `config_path` names a TOML or JSON run config (NULL
 * for the toy profile); `repeats` of 0 uses the configured count.
 *
 * # Safety
 * `config_path` must be NULL or NUL-terminated; `out` receives an owned
 * handle.
 */
DppalStatus dppal_run_experiment(const char *config_path, size_t repeats, DppalReport **out);

/**
 * Number of rows in the learning curve (round 0 included).
 *
 * # Safety
 * `report` must be a live handle or NULL.
 */
size_t dppal_report_rounds(const DppalReport *report);

/**
 * Mean and sample std of LAS and UAS at `round`.
 *
 * # Safety
 * `report` must be a live handle; output pointers may be NULL.
 */
DppalStatus dppal_report_scores(const DppalReport *report,
                                size_t round,
                                double *mean_las,
                                double *std_las,
                                double *mean_uas,
                                double *std_uas);

/**
 * Write curves.csv, diversity.csv, selections.jsonl and friends to `dir`.
 *
 * # Safety
 * `report` must be a live handle and `dir` NUL-terminated.
 */
DppalStatus dppal_report_write(const DppalReport *report, const char *dir);

/**
 * # Safety
 * `report` must come from [`dppal_run_experiment`] and not be used
 * afterwards.
 */
void dppal_report_free(DppalReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPPAL_H */
