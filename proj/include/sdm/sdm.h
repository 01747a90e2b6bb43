/* C interface to the silhouette diffusion library. Every call returns an
 * sdm_status; on failure sdm_last_error() holds a message for the calling
 * thread. Handles are opaque and owned by the caller. */
#ifndef SDM_SDM_H
#define SDM_SDM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SDM_API __declspec(dllexport)
#else
#define SDM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sdm_status {
  SDM_OK = 0,
  SDM_INVALID_ARGUMENT = 1,
  SDM_IO = 2,
  SDM_CORRUPT = 3,
  SDM_HASH_MISMATCH = 4,
  SDM_SHAPE = 5,
  SDM_NO_FRAMES = 6,
  SDM_DIVERGED = 7,
  SDM_STAGE = 8,
  SDM_COUNT_MISMATCH = 9,
  SDM_INTERNAL = 99
} sdm_status;

typedef struct sdm_config sdm_config;
typedef struct sdm_eval_report sdm_eval_report;

SDM_API const char* sdm_version(void);
SDM_API const char* sdm_last_error(void);
SDM_API const char* sdm_status_name(sdm_status s);

/* Strings returned through char** out-parameters are released with this. */
SDM_API void sdm_string_free(char* s);

/* ---- run configuration ---- */
SDM_API sdm_status sdm_config_preset(const char* name, sdm_config** out);
SDM_API sdm_status sdm_config_load(const char* path, sdm_config** out);
SDM_API sdm_status sdm_config_save(const sdm_config* cfg, const char* path);
/* Dotted key, e.g. "train.lr"; the value is parsed as JSON when it can be. */
SDM_API sdm_status sdm_config_set(sdm_config* cfg, const char* key, const char* value);
/* Replaces the scene's persons with `count` evenly spread walkers. */
SDM_API sdm_status sdm_config_set_persons(sdm_config* cfg, int count);
SDM_API sdm_status sdm_config_to_json(const sdm_config* cfg, char** out);
SDM_API void sdm_config_free(sdm_config* cfg);

/* ---- synthetic data ---- */
/* Simulates `groups` sequences of `frames` frames with the configuration's
 * scene and writes them as a dataset directory. */
SDM_API sdm_status sdm_export_dataset(const sdm_config* cfg, int groups, int frames, const char* out_dir);

/* ---- training ---- */
typedef void (*sdm_progress_fn)(void* user, int step, int max_steps, double total_loss);

/* Writes the checkpoint to the configured output path; `hash_out` (may be
 * NULL) receives the checkpoint hash. */
SDM_API sdm_status sdm_train_frame(const sdm_config* cfg, sdm_progress_fn progress, void* user,
                                   char** hash_out);
SDM_API sdm_status sdm_finetune_sequence(const sdm_config* cfg, sdm_progress_fn progress, void* user,
                                         char** hash_out);
SDM_API sdm_status sdm_checkpoint_info(const char* path, char** json_out);

/* ---- sampling and evaluation ---- */
typedef struct sdm_eval_options {
  const char* mode;          /* "model", "oracle" or "background"; NULL = "model" */
  const char* stage1_path;   /* frame-level checkpoint */
  const char* stage2_path;   /* sequence checkpoint or NULL */
  const char* dataset_root;
  const char* groups;        /* comma-separated ids or NULL for all */
  const char* image_dir;     /* composites, or NULL */
  const char* model_label;   /* or NULL */
  uint64_t seed;
  int seq_len;               /* 0 = from checkpoint */
  int T;                     /* 0 = from checkpoint */
  int batch;                 /* 0 = default */
  int allow_hash_mismatch;
} sdm_eval_options;

SDM_API void sdm_eval_options_init(sdm_eval_options* opts);
SDM_API sdm_status sdm_evaluate(const sdm_eval_options* opts, sdm_eval_report** out);
/* Samples masks for the selected groups and writes them as PGM files,
 * <out_dir>/<group>/frame_NNNNN.pgm. */
SDM_API sdm_status sdm_sample(const sdm_eval_options* opts, const char* out_dir, int* frames_written);
SDM_API sdm_status sdm_eval_report_load(const char* path, sdm_eval_report** out);
SDM_API sdm_status sdm_eval_report_save(const sdm_eval_report* r, const char* path);
SDM_API sdm_status sdm_eval_report_text(const sdm_eval_report* r, char** out);
SDM_API double sdm_eval_report_mean(const sdm_eval_report* r);
SDM_API size_t sdm_eval_report_frames(const sdm_eval_report* r);
SDM_API void sdm_eval_report_free(sdm_eval_report* r);

/* Renders reports as a (model, seq length, subset, IoU) table sorted by
 * sequence length. */
SDM_API sdm_status sdm_report_table(const sdm_eval_report* const* reports, size_t n, char** out);

/* Binary IoU of two row-major masks; both empty scores 1. */
SDM_API sdm_status sdm_iou(const uint8_t* pred, const uint8_t* truth, int rows, int cols, double* out);

#ifdef __cplusplus
}
#endif

#endif
