#ifndef RETLAB_H
#define RETLAB_H

/* Generated by cbindgen from retlab-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible `rl_*` call.
 */
typedef enum RlStatus {
  RL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RL_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument value was rejected (bad UTF-8, bad shape, bad config).
   */
  RL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The file could not be read or written.
   */
  RL_STATUS_IO = 3,
  /**
   * The file was read but its contents are not a valid artifact.
   */
  RL_STATUS_CORRUPT = 4,
  /**
   * The computation produced non-finite values.
   */
  RL_STATUS_NUMERICS = 5,
} RlStatus;

/**
 * A loaded model checkpoint together with its task description.
 */
typedef struct RlModel RlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if no
 * `rl_*` call has failed yet. Valid until the next failing call on the
 * same thread; do not free it.
 */
const char *rl_last_error_message(void);

/**
 * Library version as a static string; do not free it.
 */
const char *rl_version(void);

/**
 * Release a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be a pointer previously returned by an `rl_*` call that
 * documents caller ownership, and must not be used afterwards.
 */
void rl_string_free(char *s);

/**
 * Load a model checkpoint from `path` into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RlStatus rl_model_load(const char *path, struct RlModel **out);

/**
 * Destroy a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must come from [`rl_model_load`] and not be used afterwards.
 */
void rl_model_free(struct RlModel *model);

/**
 * Describe the model and its task as a JSON string (layers, heads,
 * dimensions, task shape, training position). Free with
 * [`rl_string_free`].
 *
 * # Safety
 * `model` must be a live handle from [`rl_model_load`].
 */
char *rl_model_info_json(const struct RlModel *model);

/**
 * Sequence length the model's task produces (rows expected by
 * [`rl_model_forward`]); 0 on a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t rl_model_seq_len(const struct RlModel *model);

/**
 * Input width expected by [`rl_model_forward`]; 0 on a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t rl_model_input_dim(const struct RlModel *model);

/**
 * Output width written by [`rl_model_forward`]; 0 on a null handle.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t rl_model_output_dim(const struct RlModel *model);

/**
 * Run the model on one encoded sequence of `rows` x `cols` f32 values
 * (row-major). Writes the `n_queries` x output_dim prediction matrix to
 * `out`, which must hold `out_capacity` >= n_queries * output_dim floats.
 *
 * # Safety
 * `inputs` must point to `rows * cols` floats, `out` to `out_capacity`
 * floats, and `model` must be a live handle.
 */
enum RlStatus rl_model_forward(const struct RlModel *model,
                               const float *inputs,
                               size_t rows,
                               size_t cols,
                               size_t n_queries,
                               float *out,
                               size_t out_capacity);

/**
 * Evaluate mean validation MSE over `n_examples` freshly generated
 * examples (stream derived from `seed`), writing it to `*out_mse`.
 *
 * # Safety
 * `model` must be a live handle and `out_mse` a valid pointer.
 */
enum RlStatus rl_model_eval(const struct RlModel *model,
                            uint64_t seed,
                            size_t n_examples,
                            double *out_mse);

/**
 * Minimum attention layers for retrieval depth `d` under the
 * information-flow model, written to `*out`. `d` must be >= 1.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RlStatus rl_flow_min_layers(uint64_t d, uint32_t *out);

/**
 * Upper bound ceil(log3(2d)) on the minimum depth, written to `*out`.
 * `d` must be >= 1.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RlStatus rl_flow_theorem1_bound(uint64_t d, uint32_t *out);

/**
 * Generate `examples` encoded examples for an N-chain, depth-D, K-dim
 * task and write them as a dataset container at `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum RlStatus rl_gen_dataset(const char *path,
                             size_t n,
                             size_t d,
                             size_t k,
                             bool ic,
                             size_t examples,
                             uint64_t seed);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RETLAB_H */
