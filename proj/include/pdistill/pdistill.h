#ifndef PDISTILL_PDISTILL_H
#define PDISTILL_PDISTILL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PD_API __declspec(dllexport)
#else
#define PD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pd_status {
  PD_OK = 0,
  PD_ERR_INVALID_ARGUMENT = 1,
  PD_ERR_SHAPE_MISMATCH = 2,
  PD_ERR_NON_FINITE = 3,
  PD_ERR_IO = 4,
  PD_ERR_CHECKPOINT_MAGIC = 5,
  PD_ERR_CHECKPOINT_VERSION = 6,
  PD_ERR_CHECKPOINT_TRUNCATED = 7,
  PD_ERR_CHECKPOINT_CHECKSUM = 8,
  PD_ERR_CHECKPOINT_KIND = 9,
  PD_ERR_CLASSIFIER_UNTRAINED = 10,
  PD_ERR_TRAINING_FAILED = 11,
  PD_ERR_INTERNAL = 99
} pd_status;

/* Message of the last failed call on this thread; empty after a success. */
PD_API const char* pd_last_error(void);
PD_API const char* pd_status_name(pd_status status);
PD_API const char* pd_version(void);

/* Settings shared by every command: config keys, seed, output directory. */
typedef struct pd_session pd_session;

PD_API pd_status pd_session_create(pd_session** out);
PD_API void pd_session_destroy(pd_session* session);
/* Merges a key=value file; keys set later win. */
PD_API pd_status pd_session_load_config(pd_session* session, const char* path);
PD_API pd_status pd_session_set(pd_session* session, const char* key, const char* value);
PD_API pd_status pd_session_set_seed(pd_session* session, uint64_t seed);
PD_API pd_status pd_session_set_out(pd_session* session, const char* dir);
/* Non-zero: progress lines on stderr. */
PD_API pd_status pd_session_set_verbose(pd_session* session, int verbose);

typedef struct pd_teacher_report {
  uint64_t steps;
  double initial_nll;
  double final_nll;
  double heldout_nll;
} pd_teacher_report;

typedef struct pd_classifier_report {
  uint64_t steps;
  double final_loss;
  double heldout_accuracy;
  double constant_input_accuracy;
} pd_classifier_report;

typedef struct pd_distill_report {
  char preset[48];
  uint64_t steps;
  double initial_kl;
  double final_kl; /* trailing mean, per timestep */
  double kl, cross_entropy, entropy, power, perceptual, contrastive, total;
} pd_distill_report;

typedef struct pd_sample_report {
  size_t files_written;
  double spectral_distance;
} pd_sample_report;

typedef enum pd_bench_mode { PD_BENCH_ANCESTRAL = 0, PD_BENCH_PARALLEL = 1 } pd_bench_mode;

typedef struct pd_bench_report {
  pd_bench_mode mode;
  size_t length;
  size_t batch;
  size_t threads;
  double wall_seconds;
  double timesteps_per_second;
} pd_bench_report;

typedef struct pd_map_report {
  double ce_mean_log_scale;
  double ce_rms;
  double kl_mean_log_scale;
  double kl_rms;
} pd_map_report;

typedef enum pd_fib_model { PD_FIB_AUTOREGRESSIVE = 0, PD_FIB_FEEDFORWARD = 1 } pd_fib_model;

typedef struct pd_fib_row {
  pd_fib_model model;
  size_t receptive_field;
  size_t length;
  double max_abs_error;
  double rms_error;
} pd_fib_row;

PD_API pd_status pd_train_teacher(pd_session* session, pd_teacher_report* report);
PD_API pd_status pd_train_classifier(pd_session* session, pd_classifier_report* report);
PD_API pd_status pd_distill(pd_session* session, pd_distill_report* report);
/* Three presets; *count receives how many reports exist even if capacity is short. */
PD_API pd_status pd_distill_ablation(pd_session* session, pd_distill_report* reports, size_t capacity,
                                     size_t* count);
PD_API pd_status pd_sample(pd_session* session, pd_sample_report* report);
/* Ancestral/parallel pairs, one pair per benchmarked length. */
PD_API pd_status pd_bench(pd_session* session, pd_bench_report* reports, size_t capacity, size_t* count);
PD_API pd_status pd_demo_map(pd_session* session, pd_map_report* report);
PD_API pd_status pd_demo_fib(pd_session* session, pd_fib_row* rows, size_t capacity, size_t* count);

/* Loaded models. Conditioning is [channels, frames] row-major for one
   sequence, upsampled by repeating each frame frame_divisor times; pass NULL
   for unconditioned models. */
typedef struct pd_teacher pd_teacher;
typedef struct pd_student pd_student;

PD_API pd_status pd_teacher_load(const char* path, pd_teacher** out);
PD_API void pd_teacher_free(pd_teacher* teacher);
PD_API size_t pd_teacher_receptive_field(const pd_teacher* teacher);
PD_API size_t pd_teacher_conditioning_channels(const pd_teacher* teacher);
PD_API pd_status pd_teacher_sample(const pd_teacher* teacher, const double* conditioning, size_t frames,
                                   size_t frame_divisor, size_t length, uint64_t seed, double* out);

PD_API pd_status pd_student_load(const char* path, pd_student** out);
PD_API void pd_student_free(pd_student* student);
PD_API size_t pd_student_conditioning_channels(const pd_student* student);
/* z holds `length` latent values, or NULL to draw them from `seed`. */
PD_API pd_status pd_student_generate(const pd_student* student, const double* conditioning, size_t frames,
                                     size_t frame_divisor, const double* z, size_t length, uint64_t seed,
                                     double* out);

/* Validates a checkpoint and copies its kind into kind (NUL-terminated). */
PD_API pd_status pd_checkpoint_inspect(const char* path, char* kind, size_t kind_capacity, uint64_t* step);
/* Samples must lie in [-1, 1]. */
PD_API pd_status pd_write_wav(const char* path, const double* samples, size_t count, uint32_t sample_rate);

#ifdef __cplusplus
}
#endif

#endif
