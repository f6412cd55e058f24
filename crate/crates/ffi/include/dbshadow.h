#ifndef DBSHADOW_H
#define DBSHADOW_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum DbsStatus {
  DBS_STATUS_OK = 0,
  DBS_STATUS_NULL_POINTER = 1,
  DBS_STATUS_INVALID_INPUT = 2,
  DBS_STATUS_NUMERIC = 3,
  DBS_STATUS_CONSTRUCTION = 4,
  DBS_STATUS_PARSE = 5,
  DBS_STATUS_IO = 6,
  DBS_STATUS_BUFFER_TOO_SMALL = 7,
  DBS_STATUS_PANIC = 8,
} DbsStatus;

typedef enum DbsMethod {
  DBS_METHOD_TRUNCATED_MEAN = 0,
  DBS_METHOD_MEDIAN_OF_MEANS = 1,
} DbsMethod;

/**
 * Hamiltonian, Gibbs state and one measurement channel per observable.
 */
typedef struct DbsSystem DbsSystem;

/**
 * Outcome labels of one protocol run.
 */
typedef struct DbsTranscript DbsTranscript;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t dbs_last_error_message(char *buf, size_t cap);

/**
 * `min(0.5, 2 g(0))` for filter width `sigma`.
 */
double dbs_default_c(double sigma);

/**
 * Builds the Gibbs state of `hamiltonian` and one channel per observable.
 * Operators are Pauli sums, one `<coefficient> <word>` per line. Pass
 * `c <= 0` for the default coupling.
 *
 * # Safety
 * `hamiltonian` must be a NUL-terminated string, `observables` an array of
 * `count` such strings, and `out` a valid pointer.
 */
enum DbsStatus dbs_system_new(size_t n,
                              const char *hamiltonian,
                              const char *const *observables,
                              size_t count,
                              double beta,
                              double sigma,
                              double c,
                              struct DbsSystem **out_system);

/**
 * # Safety
 * `system` must be null or a handle from [`dbs_system_new`] not yet freed.
 */
void dbs_system_free(struct DbsSystem *system);

/**
 * Number of observables, or 0 for a null handle.
 *
 * # Safety
 * `system` must be null or a live handle.
 */
size_t dbs_system_observables(const struct DbsSystem *system);

/**
 * Outcome probabilities `(p0, p1, p2)` of channel `index` on the Gibbs state.
 *
 * # Safety
 * `system` must be a live handle and `out_probs` must point to 3 doubles.
 */
enum DbsStatus dbs_system_probabilities(const struct DbsSystem *system,
                                        size_t index,
                                        double *out_probs);

/**
 * Mean single-shot sample `(2/c)(p1 - p2)` of channel `index`, which equals
 * `Tr[rho A]`, and `Tr[rho A]` computed directly.
 *
 * # Safety
 * `system` must be a live handle; output pointers must be valid.
 */
enum DbsStatus dbs_system_signal(const struct DbsSystem *system,
                                 size_t index,
                                 double *out_signal,
                                 double *out_expectation);

/**
 * Worst detailed-balance residual of channel `index` and whether every
 * residual is within `tol`.
 *
 * # Safety
 * `system` must be a live handle; output pointers must be valid.
 */
enum DbsStatus dbs_system_verify(const struct DbsSystem *system,
                                 size_t index,
                                 double tol,
                                 double *out_worst,
                                 bool *out_passed);

/**
 * Repetition count `ell` and copy count from the estimator sizing rules.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum DbsStatus dbs_plan_sizing(enum DbsMethod method,
                               double epsilon,
                               double delta,
                               size_t observables,
                               double c,
                               size_t *out_ell,
                               size_t *out_copies);

/**
 * Runs the protocol: `copies` Gibbs copies, each measured `ell` times per
 * observable in order. Results depend only on `seed`.
 *
 * # Safety
 * `system` must be a live handle and `out_transcript` a valid pointer.
 */
enum DbsStatus dbs_system_run(const struct DbsSystem *system,
                              size_t ell,
                              size_t copies,
                              uint64_t seed,
                              struct DbsTranscript **out_transcript);

/**
 * # Safety
 * `transcript` must be null or a handle from [`dbs_system_run`] not yet freed.
 */
void dbs_transcript_free(struct DbsTranscript *transcript);

/**
 * Number of outcome labels, or 0 for a null handle.
 *
 * # Safety
 * `transcript` must be null or a live handle.
 */
size_t dbs_transcript_len(const struct DbsTranscript *transcript);

/**
 * Copies the labels (0, 1 or 2) in copy, observable, repetition order.
 *
 * # Safety
 * `transcript` must be a live handle and `buf` must hold `cap` bytes.
 */
enum DbsStatus dbs_transcript_labels(const struct DbsTranscript *transcript,
                                     uint8_t *buf,
                                     size_t cap);

/**
 * Writes the 64-character hex fingerprint plus a NUL into `buf`.
 *
 * # Safety
 * `transcript` must be a live handle and `buf` must hold `cap` bytes.
 */
enum DbsStatus dbs_transcript_fingerprint(const struct DbsTranscript *transcript,
                                          char *buf,
                                          size_t cap);

/**
 * One estimate per observable. Fails if the transcript is too short for
 * the requested `(epsilon, delta)`.
 *
 * # Safety
 * `transcript` must be a live handle and `out_estimates` must hold `cap`
 * doubles.
 */
enum DbsStatus dbs_transcript_estimates(const struct DbsTranscript *transcript,
                                        enum DbsMethod method,
                                        double epsilon,
                                        double delta,
                                        double *out_estimates,
                                        size_t cap);

/**
 * `2 T sqrt(max_b p_b)` for `len` flip probabilities.
 *
 * # Safety
 * `flip_probs` must point to `len` doubles; `out_bound` must be valid.
 */
enum DbsStatus dbs_hybrid_bound(const double *flip_probs,
                                size_t len,
                                size_t queries,
                                double *out_bound);

/**
 * Total-variation distance between the Gibbs distribution of a Boolean
 * Hamiltonian with `k` zeros on `n` bits and its ground distribution.
 *
 * # Safety
 * `out_tv` must be valid.
 */
enum DbsStatus dbs_tv_to_ground(size_t n, uint64_t k, double beta, double *out_tv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DBSHADOW_H */
