/*
 * veritrap C API: trap-question forging, generation labeling, uncertainty
 * scoring and evaluation behind an opaque pipeline handle.
 *
 * All functions return vt_status; 0 is success. Error details for handle
 * operations come from vt_pipeline_last_error(). Status values double as
 * process exit codes (0 ok, 1 validation, 2 transport, 3 partial failure).
 */
#ifndef VERITRAP_H
#define VERITRAP_H

#include <stddef.h>

#if defined(_WIN32)
#define VT_API __declspec(dllexport)
#else
#define VT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vt_status {
    VT_OK = 0,
    VT_ERROR_VALIDATION = 1, /* bad input, config, usage or math domain */
    VT_ERROR_TRANSPORT = 2,  /* provider/network failure after retries */
    VT_ERROR_PARTIAL = 3     /* stage finished with unprocessed subjects */
} vt_status;

typedef struct vt_pipeline vt_pipeline;

VT_API const char* vt_version(void);

/*
 * Creates a pipeline from an optional JSON config file and optional JSON
 * overrides (same schema). Precedence: defaults < file < VERITRAP_* env
 * vars < overrides. Pass NULL for either argument to skip it.
 */
VT_API vt_status vt_pipeline_new(const char* config_file, const char* overrides_json,
                                 vt_pipeline** out);

VT_API void vt_pipeline_free(vt_pipeline* pipeline);

/*
 * Runs one stage: "forge", "index", "ask", "decompose", "map", "classify",
 * "score", "eval", or "pipeline" for all of them in order. Stages completed
 * earlier with matching input/config hashes are skipped.
 */
VT_API vt_status vt_pipeline_run(vt_pipeline* pipeline, const char* stage);

/* Message for the most recent failing call on this handle ("" if none). */
VT_API const char* vt_pipeline_last_error(const vt_pipeline* pipeline);

/* Per-stage summary lines for the most recent vt_pipeline_run call. */
VT_API const char* vt_pipeline_last_summary(const vt_pipeline* pipeline);

/*
 * Stateless scoring helpers. Inputs are natural-log token probabilities
 * (each <= 0); n must be >= 1.
 *
 *   vt_ru_fr / vt_ru_ft: 1 - exp(mean logprob)   (refusal / corrected fact)
 *   vt_ru_ff:            exp(mean logprob)       (fabricated fact)
 */
VT_API vt_status vt_ru_fr(const double* logprobs, size_t n, double* out);
VT_API vt_status vt_ru_ft(const double* logprobs, size_t n, double* out);
VT_API vt_status vt_ru_ff(const double* logprobs, size_t n, double* out);

/*
 * ROC-AUC of scores against binary labels (1 = incorrect/hallucinated),
 * ties counting one half. Requires both classes present.
 */
VT_API vt_status vt_roc_auc(const double* scores, const unsigned char* incorrect, size_t n,
                            double* out);

#ifdef __cplusplus
}
#endif

#endif /* VERITRAP_H */
