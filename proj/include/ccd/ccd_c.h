#ifndef CCD_C_H
#define CCD_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes: 0 ok, 2 config error,
 * 3 data error, 4 numerical failure. */
typedef enum ccd_status {
    CCD_OK = 0,
    CCD_ERR_CONFIG = 2,
    CCD_ERR_DATA = 3,
    CCD_ERR_NUMERIC = 4,
    CCD_ERR_OTHER = 5
} ccd_status;

/* Message of the last failing call on this thread; empty string if none. */
const char* ccd_last_error(void);

/* ---- pipeline commands -------------------------------------------------
 * config_json is the experiment configuration document. Each command writes
 * its artifact path (NUL-terminated) into out_path (out_cap bytes). */
ccd_status ccd_cmd_synth_data(const char* config_json, char* out_path, size_t out_cap);
ccd_status ccd_cmd_pretrain(const char* config_json, char* out_path, size_t out_cap);
ccd_status ccd_cmd_train_detector(const char* config_json, const char* pretrained_path,
                                  char* out_path, size_t out_cap);
ccd_status ccd_cmd_score(const char* config_json, const char* detector_path, char* out_path,
                         size_t out_cap);
ccd_status ccd_cmd_localize(const char* config_json, const char* global_detector_path,
                            const char* local_detector_path, char* out_path, size_t out_cap);
ccd_status ccd_cmd_evaluate(const char* config_json, const char* scores_path,
                            const char* heatmap_dir, char* out_path, size_t out_cap);
/* axis: batch_size | strong_family | loss_terms; values_json: JSON array of
 * strings. */
ccd_status ccd_cmd_sweep(const char* config_json, const char* axis, const char* values_json,
                         char* out_path, size_t out_cap);

/* ---- handles ----------------------------------------------------------- */
typedef struct ccd_model ccd_model;
typedef struct ccd_detector ccd_detector;

ccd_status ccd_model_load(const char* path, ccd_model** out);
void ccd_model_free(ccd_model* model);
ccd_status ccd_model_embed_dim(const ccd_model* model, int32_t* out);
ccd_status ccd_model_input_size(const ccd_model* model, int32_t* out);
/* Unit-norm embedding of a grayscale/RGB PNG; out must hold embed_dim
 * doubles. */
ccd_status ccd_model_embed_png(const ccd_model* model, const char* png_path, double* out,
                               size_t out_len);

ccd_status ccd_detector_load(const char* path, ccd_detector** out);
void ccd_detector_free(ccd_detector* detector);
/* Whole-image anomaly score for a PNG file (higher = more anomalous). */
ccd_status ccd_detector_score_png(const ccd_detector* detector, const char* png_path,
                                  double* out);

/* ---- metric helpers ----------------------------------------------------
 * labels are 0/1; both classes must be present. */
ccd_status ccd_metric_auroc(const double* scores, const int32_t* labels, size_t n, double* out);
/* masks are row-major 0/1 bytes of size h*w. */
ccd_status ccd_metric_iou(const uint8_t* pred, const uint8_t* gt, int32_t h, int32_t w,
                          double* out);

#ifdef __cplusplus
}
#endif

#endif /* CCD_C_H */
