/* C API of the paraformer shared library.
 *
 * All functions return pf_status_t (PF_OK on success); on failure
 * pf_last_error() describes the problem for the calling thread. Objects are
 * opaque handles released with their pf_*_free function; strings returned
 * through char** are heap-allocated and released with pf_string_free.
 */
#ifndef PARAFORMER_CAPI_H
#define PARAFORMER_CAPI_H

#include <stdint.h>

#if defined(_WIN32)
#define PF_API __declspec(dllexport)
#else
#define PF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct pf_model_t pf_model_t;
typedef struct pf_dataset_t pf_dataset_t;

typedef enum pf_status_t {
    PF_OK = 0,
    PF_ERROR_USAGE = 1,    /* bad arguments / options text */
    PF_ERROR_CONTRACT = 2, /* contract or config violation */
    PF_ERROR_NUMERIC = 3,  /* non-finite values, failed numeric checks */
    PF_ERROR_IO = 4        /* filesystem or file format problem */
} pf_status_t;

PF_API const char* pf_version(void);
/* Message of the last failure on this thread; empty string if none. */
PF_API const char* pf_last_error(void);
PF_API void pf_string_free(char* s);

/* ---- model ---------------------------------------------------------- */

/* config_text uses "key = value" lines (empty string for defaults):
 *   variant = paraformer | paraformer_u | serial_baseline
 *   dim, layers, heads, pe, pool, share_* flags, stage_depths, stage_dims,
 *   sinkhorn_iters, match_threshold, seed
 */
PF_API pf_status_t pf_model_create(const char* config_text, pf_model_t** out_model);
PF_API pf_status_t pf_model_load(const char* path, pf_model_t** out_model);
PF_API pf_status_t pf_model_save(const pf_model_t* model, const char* path);
PF_API void pf_model_free(pf_model_t* model);
PF_API int64_t pf_model_param_count(const pf_model_t* model);
/* Resolved config as "key = value" text. */
PF_API pf_status_t pf_model_config_text(const pf_model_t* model, char** out_text);

/* ---- datasets -------------------------------------------------------- */

/* options_text keys: pairs, keypoints, image_width, image_height, dim,
 * noise, distractors, position_jitter, seed */
PF_API pf_status_t pf_dataset_generate(const char* options_text, pf_dataset_t** out_dataset);
PF_API pf_status_t pf_dataset_load(const char* path, pf_dataset_t** out_dataset);
PF_API pf_status_t pf_dataset_save(const pf_dataset_t* dataset, const char* path);
PF_API int64_t pf_dataset_num_pairs(const pf_dataset_t* dataset);
/* Pair stats (counts, gt sizes) as a JSON string. */
PF_API pf_status_t pf_dataset_info(const pf_dataset_t* dataset, char** out_json);
PF_API void pf_dataset_free(pf_dataset_t* dataset);

/* ---- matching and evaluation ----------------------------------------- */

typedef struct pf_match_t {
    int32_t i;
    int32_t j;
    float confidence;
} pf_match_t;

/* Runs the model on one pair. *out_matches is allocated by the library and
 * released with pf_matches_free. threshold < 0 uses the model's configured
 * match threshold. */
PF_API pf_status_t pf_match_pair(const pf_model_t* model, const pf_dataset_t* dataset, int64_t pair_index,
                                 float threshold, pf_match_t** out_matches, int64_t* out_count);
PF_API void pf_matches_free(pf_match_t* matches);

/* Aggregate + per-pair metrics of the model on a dataset, as JSON. */
PF_API pf_status_t pf_evaluate(const pf_model_t* model, const pf_dataset_t* dataset, char** out_json);
/* Same for the nearest-neighbor baseline (mutual = 0 or 1). */
PF_API pf_status_t pf_evaluate_nn(const pf_dataset_t* dataset, int mutual, char** out_json);

/* ---- training --------------------------------------------------------- */

typedef void (*pf_train_callback_t)(int64_t epoch, double mean_loss, double lr, void* user);

/* options_text keys: epochs, lr, warmup_epochs, weight_decay, shuffle_seed,
 * sinkhorn_iters, checkpoint_best, checkpoint_last, resume (path of a .last
 * checkpoint to continue from). Returns per-epoch losses as JSON. */
PF_API pf_status_t pf_train(pf_model_t* model, const pf_dataset_t* dataset, const char* options_text,
                            pf_train_callback_t callback, void* user, char** out_json);

/* ---- analysis --------------------------------------------------------- */

/* Analytic flops of a model config at m x n keypoints, as JSON breakdown. */
PF_API pf_status_t pf_flops(const char* config_text, int64_t m, int64_t n, char** out_json);

/* Central finite-difference gradient checks; options_text keys: seeds,
 * op_tol, model_tol. JSON report; PF_ERROR_NUMERIC when a check fails. */
PF_API pf_status_t pf_gradcheck(const char* options_text, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* PARAFORMER_CAPI_H */
