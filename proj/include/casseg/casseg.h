/* C interface to the casseg library.
 *
 * Conventions:
 *   - Objects are opaque handles created and freed through this API.
 *   - Every fallible call returns a casseg_status; nonzero means failure.
 *     The per-thread message from casseg_last_error() describes the most
 *     recent failure on the calling thread.
 *   - Output parameters are written only on CASSEG_OK.
 *   - Grid data is row-major and channel-interleaved:
 *     values[(y * width + x) * channels + c].
 */
#ifndef CASSEG_H
#define CASSEG_H

#include <stdint.h>

#if defined(_WIN32)
#define CASSEG_API __declspec(dllexport)
#elif defined(__GNUC__) || defined(__clang__)
#define CASSEG_API __attribute__((visibility("default")))
#else
#define CASSEG_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum casseg_status {
  CASSEG_OK = 0,
  CASSEG_ERR_INVALID_ARGUMENT = 1,
  CASSEG_ERR_IO = 2,
  CASSEG_ERR_RUNTIME = 3
} casseg_status;

typedef struct casseg_grid casseg_grid;
typedef struct casseg_region_map casseg_region_map;

CASSEG_API const char* casseg_version(void);

/* Message for the most recent failure on this thread; never NULL. */
CASSEG_API const char* casseg_last_error(void);

/* Frees strings returned through char** out-parameters. */
CASSEG_API void casseg_string_free(char* s);

/* ---- grids ------------------------------------------------------------ */

/* values may be NULL for a zero-filled grid. */
CASSEG_API casseg_status casseg_grid_create(int height, int width, int channels, const double* values,
                                 casseg_grid** out);
CASSEG_API void casseg_grid_free(casseg_grid* grid);
CASSEG_API casseg_status casseg_grid_shape(const casseg_grid* grid, int* height, int* width, int* channels);
/* Borrowed pointer, valid until the grid is freed. */
CASSEG_API const double* casseg_grid_data(const casseg_grid* grid);
CASSEG_API casseg_status casseg_grid_save(const casseg_grid* grid, const char* path);
CASSEG_API casseg_status casseg_grid_load(const char* path, casseg_grid** out);

/* ---- region maps ------------------------------------------------------ */

/* ids must already be contiguous {0..N-1} with every id present. */
CASSEG_API casseg_status casseg_region_map_create(int height, int width, const int32_t* ids,
                                       casseg_region_map** out);
/* Arbitrary labels, renumbered by first appearance. */
CASSEG_API casseg_status casseg_region_map_from_labels(int height, int width, const int32_t* labels,
                                            casseg_region_map** out);
CASSEG_API void casseg_region_map_free(casseg_region_map* map);
CASSEG_API casseg_status casseg_region_map_shape(const casseg_region_map* map, int* height, int* width,
                                      int* region_count);
CASSEG_API const int32_t* casseg_region_map_ids(const casseg_region_map* map);
CASSEG_API casseg_status casseg_region_map_save(const casseg_region_map* map, const char* path);
CASSEG_API casseg_status casseg_region_map_load(const char* path, casseg_region_map** out);
/* perm holds region_count entries forming a bijection on {0..N-1}. */
CASSEG_API casseg_status casseg_region_map_permute(const casseg_region_map* map, const int32_t* perm,
                                        casseg_region_map** out);

/* ---- region statistics ------------------------------------------------ */

/* means: region_count * channels doubles, region-major; sizes:
 * region_count entries. Either pointer may be NULL to skip it. */
CASSEG_API casseg_status casseg_region_stats(const casseg_grid* field, const casseg_region_map* regions,
                                  double* means, int64_t* sizes);

/* ---- losses ------------------------------------------------------------ */

CASSEG_API casseg_status casseg_cas_forward(const casseg_grid* field, const casseg_region_map* regions,
                                 double alpha, double* value);
CASSEG_API casseg_status casseg_cas_backward(const casseg_grid* field, const casseg_region_map* regions,
                                  double alpha, casseg_grid** grad);
/* Attainable range of the loss over valid softmax fields. */
CASSEG_API casseg_status casseg_cas_bounds(int region_count, int channels, double alpha, double* lower,
                                double* upper);
CASSEG_API casseg_status casseg_ce_forward(const casseg_grid* field, const casseg_region_map* labels,
                                double* value);
CASSEG_API casseg_status casseg_ce_backward(const casseg_grid* field, const casseg_region_map* labels,
                                 casseg_grid** grad);
/* flipped_won may be NULL; it reports whether the inverted labeling won. */
CASSEG_API casseg_status casseg_cace_forward(const casseg_grid* field, const casseg_region_map* labels,
                                  double* value, int* flipped_won);
CASSEG_API casseg_status casseg_cace_backward(const casseg_grid* field, const casseg_region_map* labels,
                                   casseg_grid** grad);

/* ---- metrics ----------------------------------------------------------- */

/* Binary maps travel as single-channel grids holding exactly 0.0 or 1.0. */
CASSEG_API casseg_status casseg_binarize(const casseg_grid* saliency, casseg_grid** binary);
CASSEG_API casseg_status casseg_f_beta(const casseg_grid* predicted, const casseg_grid* truth,
                            double beta_sq, double* value);
CASSEG_API casseg_status casseg_mae(const casseg_grid* saliency, const casseg_grid* truth, double* value);
CASSEG_API casseg_status casseg_precision_recall(const casseg_grid* predicted, const casseg_grid* truth,
                                      double* precision, double* recall);
CASSEG_API casseg_status casseg_rand_index(const casseg_region_map* a, const casseg_region_map* b,
                                double* value);
CASSEG_API casseg_status casseg_variation_of_information(const casseg_region_map* a,
                                              const casseg_region_map* b, double* value);
CASSEG_API casseg_status casseg_gt_covering(const casseg_region_map* predicted,
                                 const casseg_region_map* truth, double* value);
CASSEG_API casseg_status casseg_boundary_f(const casseg_region_map* predicted,
                                const casseg_region_map* truth, double tol, double* value);

/* ---- harness ----------------------------------------------------------- */

/* Default experiment configuration as a JSON document. */
CASSEG_API casseg_status casseg_default_config(char** json_out);
/* Built-in preset by name (toy-imbalance, fidelity-sweep, alpha-sweep,
 * properties, texture-metrics). */
CASSEG_API casseg_status casseg_preset_config(const char* name, char** json_out);
/* Sets a dotted-path key (e.g. "data.count") in a config document. The
 * value is parsed as JSON when possible, else taken as a string. */
CASSEG_API casseg_status casseg_config_set(const char* config_json, const char* key, const char* value,
                                char** json_out);

/* Runs the configured experiment and writes its result files under
 * out_dir (overrides any out_dir in the config). all_pass (may be NULL)
 * receives 1 unless a property check failed. */
CASSEG_API casseg_status casseg_run_experiment(const char* config_json, const char* out_dir, int* all_pass);

/* Writes a dataset directory; see the library docs for the config keys. */
CASSEG_API casseg_status casseg_generate_dataset(const char* config_json, const char* out_dir);

/* Scores a checkpoint against a dataset directory. */
CASSEG_API casseg_status casseg_evaluate(const char* checkpoint_dir, const char* dataset_dir,
                              const char* config_json, const char* out_dir);

/* Analytic-vs-numeric gradient comparison. Tolerances: 1e-6 loss-level,
 * 1e-5 through the network. */
CASSEG_API casseg_status casseg_grad_check(uint64_t seed, double* loss_level_err, double* net_err);

#ifdef __cplusplus
}
#endif

#endif /* CASSEG_H */
