/* C interface to the abnode library. All functions return an abnode_status;
 * on failure abnode_last_error() describes the cause (thread-local, valid
 * until the next call on the same thread). */
#ifndef ABNODE_C_H
#define ABNODE_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ABNODE_API __declspec(dllexport)
#else
#define ABNODE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum abnode_status {
  ABNODE_OK = 0,
  ABNODE_ERR_INTERNAL = 1,
  ABNODE_ERR_CONFIG = 2,
  ABNODE_ERR_SIMULATION = 3,
  ABNODE_ERR_TRAINING = 4,
  ABNODE_ERR_MISSING_ARTIFACT = 5,
  ABNODE_ERR_DATA = 6,
  ABNODE_ERR_INVALID_ARGUMENT = 7
} abnode_status;

typedef struct abnode_config abnode_config;
typedef struct abnode_dataset abnode_dataset;
typedef struct abnode_model abnode_model;

enum { ABNODE_STATE_DIM = 18, ABNODE_CONTROL_DIM = 5 };

ABNODE_API const char* abnode_version(void);
ABNODE_API const char* abnode_last_error(void);
/* Name of the library error class behind the last failure, e.g. "NonFinite". */
ABNODE_API const char* abnode_last_error_kind(void);

/* Configuration. path == NULL gives the built-in defaults. */
ABNODE_API abnode_status abnode_config_load(const char* path, abnode_config** out);
ABNODE_API abnode_status abnode_config_parse(const char* text, abnode_config** out);
ABNODE_API void abnode_config_free(abnode_config* cfg);
ABNODE_API abnode_status abnode_config_set_seed(abnode_config* cfg, uint64_t seed);
ABNODE_API abnode_status abnode_config_set_jobs(abnode_config* cfg, int jobs);
ABNODE_API abnode_status abnode_config_seed(const abnode_config* cfg, uint64_t* seed);
ABNODE_API abnode_status abnode_config_jobs(const abnode_config* cfg, int* jobs);
/* Run directory named in the config ("" when unset). */
ABNODE_API const char* abnode_config_out(const abnode_config* cfg);
/* Comma-separated model names of [train] models. */
ABNODE_API const char* abnode_config_models(const abnode_config* cfg);
/* Canonical text of the resolved configuration; caller frees with abnode_string_free. */
ABNODE_API abnode_status abnode_config_format(const abnode_config* cfg, char** text);
ABNODE_API void abnode_string_free(char* s);

/* Pipeline stages. dataset_dir holds index.txt and traj/; run_dir receives
 * models/, eval/ and studies/. */
ABNODE_API abnode_status abnode_generate(const abnode_config* cfg, const char* dataset_dir);
ABNODE_API abnode_status abnode_train(const abnode_config* cfg, const char* dataset_dir, const char* model,
                                      const char* run_dir);
ABNODE_API abnode_status abnode_eval(const abnode_config* cfg, const char* dataset_dir, const char* model,
                                     const char* run_dir);
ABNODE_API abnode_status abnode_study(const abnode_config* cfg, const char* dataset_dir, const char* study,
                                      const char* run_dir);

/* Datasets. */
ABNODE_API abnode_status abnode_dataset_load(const char* dir, abnode_dataset** out);
ABNODE_API void abnode_dataset_free(abnode_dataset* data);
ABNODE_API size_t abnode_dataset_config_count(const abnode_dataset* data);
ABNODE_API size_t abnode_dataset_trajectory_count(const abnode_dataset* data);

/* Trained models. */
ABNODE_API abnode_status abnode_model_load(const char* checkpoint, abnode_model** out);
ABNODE_API void abnode_model_free(abnode_model* model);
ABNODE_API const char* abnode_model_kind(const abnode_model* model);
/* dx/dt at (x, u): x has 18 entries, u 5, out 18. */
ABNODE_API abnode_status abnode_model_derivative(const abnode_model* model, const double* x, const double* u,
                                                 double* out);
/* RK4 rollout with fixed step dt and zero-order-held controls (n_steps x 5,
 * row-major). out receives (n_steps + 1) x 18 states, row-major. */
ABNODE_API abnode_status abnode_model_rollout(const abnode_model* model, const double* x0, const double* controls,
                                              size_t n_steps, double dt, double* out);

/* Run manifest written atomically to path. inputs/outputs are
 * comma-separated lists. */
typedef struct abnode_manifest {
  const char* command;
  const char* config_path;
  uint64_t seed;
  int jobs;
  const char* inputs;
  const char* outputs;
  double wall_seconds;
  int exit_code;
  const char* message;
} abnode_manifest;

ABNODE_API abnode_status abnode_manifest_write(const char* path, const abnode_manifest* manifest);

#ifdef __cplusplus
}
#endif

#endif
