/* C interface to the tcvsr library. Every call returns a tcvsr_status; on
 * failure tcvsr_last_error() describes the problem (per thread). Objects are
 * opaque handles released with their *_free function; freeing NULL is a
 * no-op. */
#ifndef TCVSR_H
#define TCVSR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TCVSR_API __declspec(dllexport)
#else
#define TCVSR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tcvsr_status {
  TCVSR_OK = 0,
  TCVSR_ERR_INVALID_ARGUMENT = 1,
  TCVSR_ERR_SHAPE = 2,
  TCVSR_ERR_NUMERIC = 3,
  TCVSR_ERR_IO = 4,
  TCVSR_ERR_CONFIG = 5,
  TCVSR_ERR_STATE = 6,
  TCVSR_ERR_INTERNAL = 7
} tcvsr_status;

typedef struct tcvsr_config tcvsr_config;
typedef struct tcvsr_sequence tcvsr_sequence;
typedef struct tcvsr_trainer tcvsr_trainer;
typedef struct tcvsr_model tcvsr_model;
typedef struct tcvsr_report tcvsr_report;

TCVSR_API const char* tcvsr_last_error(void);
TCVSR_API const char* tcvsr_version(void);
TCVSR_API const char* tcvsr_status_name(tcvsr_status s);

/* ---- configuration (flat key=value, dotted keys) ---- */
/* preset: "toy" or "full". */
TCVSR_API tcvsr_status tcvsr_config_new(const char* preset, tcvsr_config** out);
TCVSR_API void tcvsr_config_free(tcvsr_config* cfg);
TCVSR_API tcvsr_status tcvsr_config_set(tcvsr_config* cfg, const char* key, const char* value);
/* "key=value". */
TCVSR_API tcvsr_status tcvsr_config_assign(tcvsr_config* cfg, const char* assignment);
TCVSR_API tcvsr_status tcvsr_config_load_file(tcvsr_config* cfg, const char* path);
TCVSR_API tcvsr_status tcvsr_config_write_file(const tcvsr_config* cfg, const char* path);
/* Copies the value (NUL-terminated) into buf when it fits; *needed receives
 * the length including the terminator. */
TCVSR_API tcvsr_status tcvsr_config_get(const tcvsr_config* cfg, const char* key, char* buf, size_t cap,
                                        size_t* needed);
TCVSR_API tcvsr_status tcvsr_config_to_text(const tcvsr_config* cfg, char* buf, size_t cap, size_t* needed);
/* Validates both the model and training sections. */
TCVSR_API tcvsr_status tcvsr_config_validate(const tcvsr_config* cfg);

/* ---- frame sequences (3 x H x W float frames in [0, 1]) ---- */
/* pattern: "checkerboard", "gradient-noise" or "text-like"; (dx, dy) is the
 * per-frame displacement in pixels. */
TCVSR_API tcvsr_status tcvsr_synth(const char* pattern, double dx, double dy, int frames, int height, int width,
                                   uint64_t seed, tcvsr_sequence** out);
TCVSR_API tcvsr_status tcvsr_sequence_load(const char* dir, tcvsr_sequence** out);
/* Writes frame_%05d.png files plus manifest.txt. */
TCVSR_API tcvsr_status tcvsr_sequence_save(const tcvsr_sequence* seq, const char* dir);
/* kind: "bi" or "bd". clamped (optional) receives the number of clamped
 * values for "bi". */
TCVSR_API tcvsr_status tcvsr_sequence_degrade(const tcvsr_sequence* hr, const char* kind, int scale,
                                              tcvsr_sequence** out, int64_t* clamped);
TCVSR_API tcvsr_status tcvsr_sequence_bicubic_upscale(const tcvsr_sequence* lr, int scale, tcvsr_sequence** out);
TCVSR_API tcvsr_status tcvsr_sequence_info(const tcvsr_sequence* seq, int* frames, int* height, int* width);
/* Copies frame `index` (3 * H * W floats, channel-major) into dst. */
TCVSR_API tcvsr_status tcvsr_sequence_frame(const tcvsr_sequence* seq, int index, float* dst, size_t count);
TCVSR_API void tcvsr_sequence_free(tcvsr_sequence* seq);

/* ---- training ---- */
typedef struct tcvsr_train_row {
  int64_t step;
  double loss;
  double sr_loss;
  double flow_loss;
  double lr_main;
  double lr_flow;
} tcvsr_train_row;

typedef void (*tcvsr_train_callback)(const tcvsr_train_row* row, void* user);

TCVSR_API tcvsr_status tcvsr_trainer_new(const tcvsr_config* cfg, tcvsr_trainer** out);
TCVSR_API tcvsr_status tcvsr_trainer_resume(const char* checkpoint_dir, tcvsr_trainer** out);
/* lr may be NULL: it is then produced from hr with train.degradation. */
TCVSR_API tcvsr_status tcvsr_trainer_set_data(tcvsr_trainer* tr, const tcvsr_sequence* hr, const tcvsr_sequence* lr);
TCVSR_API tcvsr_status tcvsr_trainer_step(tcvsr_trainer* tr, tcvsr_train_row* row);
/* Runs to train.total_iters, or max_steps more steps when max_steps >= 0. */
TCVSR_API tcvsr_status tcvsr_trainer_run(tcvsr_trainer* tr, int64_t max_steps, tcvsr_train_callback cb, void* user);
TCVSR_API tcvsr_status tcvsr_trainer_progress(const tcvsr_trainer* tr, int64_t* done, int64_t* total);
TCVSR_API tcvsr_status tcvsr_trainer_save(const tcvsr_trainer* tr, const char* dir);
TCVSR_API tcvsr_status tcvsr_trainer_write_log(const tcvsr_trainer* tr, const char* csv_path);
/* The trainer's resolved configuration (caller frees). */
TCVSR_API tcvsr_status tcvsr_trainer_config(const tcvsr_trainer* tr, tcvsr_config** out);
TCVSR_API void tcvsr_trainer_free(tcvsr_trainer* tr);

/* ---- inference ---- */
TCVSR_API tcvsr_status tcvsr_model_load(const char* checkpoint_dir, tcvsr_model** out);
TCVSR_API tcvsr_status tcvsr_model_param_count(const tcvsr_model* m, int64_t* count);
/* Frames are cropped to the model's size multiple before inference. */
TCVSR_API tcvsr_status tcvsr_model_infer(const tcvsr_model* m, const tcvsr_sequence* lr, tcvsr_sequence** sr);
/* Flow from src onto ref (frames index_ref, index_src of seq) as a
 * 2 x H x W TCT1 file; mean endpoint error against (dx, dy) over pixels at
 * least `margin` from the border goes to *epe when non-NULL. */
TCVSR_API tcvsr_status tcvsr_model_flow(const tcvsr_model* m, const tcvsr_sequence* seq, int index_ref,
                                        int index_src, const char* tct_path, double dx, double dy, int margin,
                                        double* epe);
TCVSR_API void tcvsr_model_free(tcvsr_model* m);

/* ---- evaluation ---- */
/* channel: "y" or "rgb". */
TCVSR_API tcvsr_status tcvsr_evaluate(const tcvsr_sequence* sr, const tcvsr_sequence* gt, const char* channel,
                                      tcvsr_report** out);
TCVSR_API tcvsr_status tcvsr_report_summary(const tcvsr_report* r, int* frames, double* mean_psnr, double* mean_ssim,
                                            double* psnr_std);
TCVSR_API tcvsr_status tcvsr_report_row(const tcvsr_report* r, int index, double* psnr, double* ssim, int* identical);
TCVSR_API tcvsr_status tcvsr_report_write_csv(const tcvsr_report* r, const char* path);
TCVSR_API tcvsr_status tcvsr_report_read_csv(const char* path, tcvsr_report** out);
TCVSR_API void tcvsr_report_free(tcvsr_report* r);
/* Saves the T x W profile of `row` as PNG (png_path may be NULL) and
 * reports its horizontal slope in px/frame (slope may be NULL). */
TCVSR_API tcvsr_status tcvsr_temporal_profile(const tcvsr_sequence* seq, int64_t row, const char* png_path,
                                              double* slope);

/* ---- ablation ---- */
typedef struct tcvsr_ablation_row {
  int model;
  const char* variant;
  int tsb, cmb, one_stage, progressive;
  int64_t params;
  double initial_loss, final_loss;
  int finite, monotone;
  double psnr_y;
  int psnr_rank; /* 0 until the sweep finishes */
} tcvsr_ablation_row;

typedef void (*tcvsr_ablation_callback)(const tcvsr_ablation_row* row, void* user);

/* Trains each requested model (1..12; all when n_models == 0) on train_hr,
 * scores held-out eval_hr after degrading both with train.degradation, and
 * writes the CSV. */
TCVSR_API tcvsr_status tcvsr_ablate(const tcvsr_config* base, const tcvsr_sequence* train_hr,
                                    const tcvsr_sequence* eval_hr, const int* models, int n_models,
                                    const char* csv_path, tcvsr_ablation_callback cb, void* user);

/* ---- gradient checks ---- */
typedef struct tcvsr_gradcheck_row {
  const char* name;
  double max_rel_error;
  double tolerance;
  int64_t checked;
  int passed;
  double seconds;
} tcvsr_gradcheck_row;

typedef void (*tcvsr_gradcheck_callback)(const tcvsr_gradcheck_row* row, void* user);

/* Runs the suite; *failures (required) receives the number of failing entries. With
 * negative_control != 0 a deliberately broken gradient is also checked and
 * counted as a failure if it is NOT detected. */
TCVSR_API tcvsr_status tcvsr_gradcheck(uint64_t seed, int negative_control, tcvsr_gradcheck_callback cb, void* user,
                                       int* failures);

#ifdef __cplusplus
}
#endif

#endif /* TCVSR_H */
