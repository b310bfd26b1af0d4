#ifndef BEAMSWEEP_H
#define BEAMSWEEP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes shared by every fallible call.
 */
typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_INPUT = 2,
  BS_STATUS_INVALID_CONFIG = 3,
  BS_STATUS_CONTRACT_VIOLATION = 4,
  BS_STATUS_IO = 5,
  BS_STATUS_BUFFER_TOO_SMALL = 6,
  BS_STATUS_PANIC = 7,
} BsStatus;

/**
 * Reconstruction methods selectable through the C API.
 */
typedef enum BsMethod {
  BS_METHOD_OVERSAMPLED = 0,
  BS_METHOD_DFT = 1,
  BS_METHOD_SPLINE = 2,
  BS_METHOD_OMP = 3,
} BsMethod;

/**
 * Opaque configuration handle.
 */
typedef struct BsConfig BsConfig;

/**
 * Opaque pipeline handle: grids, dictionary and detector built from a config.
 */
typedef struct BsPipeline BsPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *bs_last_error(void);

/**
 * Default configuration. Never null.
 */
struct BsConfig *bs_config_default(void);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BsStatus bs_config_from_toml(const char *toml, struct BsConfig **out);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards. Null is ignored.
 */
void bs_config_free(struct BsConfig *config);

/**
 * Overrides the master seed, the number of seeds per scenario and the SNR.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum BsStatus bs_config_set_run(struct BsConfig *config,
                                uint64_t master_seed,
                                size_t n_seeds,
                                double snr_db);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum BsStatus bs_naf_resolution(size_t n_elements, double *out);

/**
 * Minimal beam grid for `n_elements` per array within `|naf| <= naf_limit`.
 *
 * # Safety
 * `out` must hold `capacity` doubles; `out_len` must be valid.
 */
enum BsStatus bs_minimal_grid(size_t n_elements,
                              double naf_limit,
                              double *out,
                              size_t capacity,
                              size_t *out_len);

/**
 * Normalized Dirichlet kernel of the given order.
 */
double bs_dirichlet_kernel(double lag, size_t order);

/**
 * Cell-averaging CFAR over `n` power cells; writes 0/1 flags to `mask`.
 *
 * # Safety
 * `profile` and `mask` must each hold `n` elements.
 */
enum BsStatus bs_ca_cfar(const double *profile,
                         size_t n,
                         double p_fa,
                         size_t n_training,
                         size_t n_guard,
                         uint8_t *mask);

/**
 * Builds the processing pipeline for a configuration.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum BsStatus bs_pipeline_new(const struct BsConfig *config, struct BsPipeline **out);

/**
 * # Safety
 * `pipeline` must come from this library and not be used afterwards. Null is ignored.
 */
void bs_pipeline_free(struct BsPipeline *pipeline);

/**
 * Minimal or oversampled beam grid of a pipeline.
 *
 * # Safety
 * `pipeline` must be live; `out` must hold `capacity` doubles.
 */
enum BsStatus bs_pipeline_grid(const struct BsPipeline *pipeline,
                               bool oversampled,
                               double *out,
                               size_t capacity,
                               size_t *out_len);

/**
 * Reconstructs one range row of beam magnitudes taken on the minimal grid.
 *
 * For DFT and spline the output is the magnitude on the oversampled grid;
 * for OMP it is the sparse coefficient spectrum over the candidate grid.
 *
 * # Safety
 * `magnitudes` must hold `n` doubles and `out` `capacity` doubles.
 */
enum BsStatus bs_reconstruct_row(const struct BsPipeline *pipeline,
                                 enum BsMethod method,
                                 const double *magnitudes,
                                 size_t n,
                                 double *out,
                                 size_t capacity,
                                 size_t *out_len);

/**
 * Runs OMP against the pipeline dictionary. Writes candidate-grid indices and
 * coefficients in selection order.
 *
 * # Safety
 * `y` must hold `n` doubles; `support` and `coefficients` `capacity` elements each.
 */
enum BsStatus bs_omp(const struct BsPipeline *pipeline,
                     const double *y,
                     size_t n,
                     size_t *support,
                     double *coefficients,
                     size_t capacity,
                     size_t *out_len);

/**
 * Runs the full Monte Carlo evaluation and returns the JSON report. Release
 * the string with [`bs_string_free`].
 *
 * # Safety
 * `config` must be live and `json_out` a valid pointer.
 */
enum BsStatus bs_evaluate_json(const struct BsConfig *config, char **json_out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void bs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMSWEEP_H */
