#ifndef CRLAB_CRLAB_H_
#define CRLAB_CRLAB_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(CRLAB_BUILDING)
#define CRLAB_API __declspec(dllexport)
#else
#define CRLAB_API __declspec(dllimport)
#endif
#else
#define CRLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes of the command-line tool. */
typedef enum crlab_status {
  CRLAB_OK = 0,
  CRLAB_ERR_USAGE = 1,
  CRLAB_ERR_CONFIG = 2,
  CRLAB_ERR_NUMERIC = 3,
  CRLAB_ERR_IO = 4,
  CRLAB_ERR_ACCESS = 5,
  CRLAB_ERR_INTERNAL = 6
} crlab_status;

typedef struct crlab_config crlab_config;
typedef struct crlab_env crlab_env;
typedef struct crlab_student crlab_student;

enum { CRLAB_NUM_ACTIONS = 4 };

CRLAB_API const char* crlab_version(void);

/* Message of the last failed call on this thread; empty when none. */
CRLAB_API const char* crlab_last_error(void);

/* Strings returned through char** out-parameters are released with this. */
CRLAB_API void crlab_string_free(char* s);

/* ---- configuration -------------------------------------------------- */

/* path NULL or "" yields the defaults. */
CRLAB_API crlab_status crlab_config_load(const char* path, crlab_config** out);
CRLAB_API crlab_status crlab_config_parse(const char* text, crlab_config** out);
/* Full "key = value" listing of every setting. */
CRLAB_API crlab_status crlab_config_snapshot(const crlab_config* config, char** out_text);
CRLAB_API void crlab_config_free(crlab_config* config);

/* ---- simulator ------------------------------------------------------ */

/* task: "reach" or "circle". */
CRLAB_API crlab_status crlab_env_create(const crlab_config* config, const char* task, int randomize,
                                        crlab_env** out);
CRLAB_API crlab_status crlab_env_reset(crlab_env* env, uint64_t seed);
CRLAB_API crlab_status crlab_env_step(crlab_env* env, int action, double* reward, int* done);
/* RGB bytes, row-major; valid until the next reset or step. */
CRLAB_API crlab_status crlab_env_observation(const crlab_env* env, const uint8_t** pixels, int* height,
                                             int* width);
CRLAB_API void crlab_env_free(crlab_env* env);

/* ---- student policy (observation only, no task input) --------------- */

CRLAB_API crlab_status crlab_student_load(const char* path, crlab_student** out);
CRLAB_API crlab_status crlab_student_act(const crlab_student* student, const uint8_t* pixels, int height,
                                         int width, double probs[CRLAB_NUM_ACTIONS], int* action);
CRLAB_API void crlab_student_free(crlab_student* student);

/* ---- pipeline stages ------------------------------------------------ */

CRLAB_API crlab_status crlab_collect_random(const crlab_config* config, const char* task, int64_t steps,
                                            uint64_t seed, const char* out_path);

/* Trains on 80% of the transitions; reports inverse accuracy on the rest. */
CRLAB_API crlab_status crlab_train_srl(const crlab_config* config, const char* data_path, uint64_t seed,
                                       const char* out_path, double* heldout_accuracy);

/* Writes teacher.crlp, checkpoints/ckpt_<timesteps>.crlp and reward_curve.csv. */
CRLAB_API crlab_status crlab_train_teacher(const crlab_config* config, const char* task,
                                           const char* encoder_path, uint64_t seed, const char* out_dir);

/* size_cap <= 0 takes the configured cap. */
CRLAB_API crlab_status crlab_gen_distill(const crlab_config* config, const char* task, int task_id,
                                         const char* teacher_path, const char* encoder_path, int size_cap,
                                         uint64_t seed, const char* out_path);

CRLAB_API crlab_status crlab_augment(const char* in_path, const double* factors, size_t n_factors,
                                     const char* out_path);

CRLAB_API crlab_status crlab_merge(const char* const* in_paths, size_t n_paths, const char* out_path);

/* loss_csv may be NULL. */
CRLAB_API crlab_status crlab_distill(const crlab_config* config, const char* data_path, uint64_t seed,
                                     const char* out_path, const char* loss_csv);

typedef struct crlab_eval_result {
  double raw_mean;
  double std_error;
  double random_mean;
  double teacher_mean;
  double normalized; /* NaN without a reference mean */
  int n_eval;
} crlab_eval_result;

/* policy_path: teacher (needs encoder_path) or student checkpoint.
 * anchors_csv (task,random_mean,teacher_mean) may be NULL.
 * out_csv may be NULL; otherwise an eval.csv row is written. */
CRLAB_API crlab_status crlab_eval(const crlab_config* config, const char* policy_path, const char* encoder_path,
                                  const char* task, int n_eval, uint64_t seed, const char* anchors_csv,
                                  const char* out_csv, crlab_eval_result* out);

/* Distills every ckpt_*.crlp of checkpoints_dir; writes curve.csv and curve.svg. */
CRLAB_API crlab_status crlab_curve(const crlab_config* config, const char* checkpoints_dir,
                                   const char* encoder_path, const char* task, uint64_t seed,
                                   const char* out_dir, double* mean_abs_gap);

/* Full sequential run. probe_access != 0 tries to reopen the first task's
 * training environment during the second task (fails with CRLAB_ERR_ACCESS). */
CRLAB_API crlab_status crlab_continual(const crlab_config* config, const char* out_dir, int probe_access);

/* Re-runs a run directory from its config snapshot into scratch_dir and
 * compares every CSV byte for byte. Mismatches yield CRLAB_ERR_NUMERIC. */
CRLAB_API crlab_status crlab_replay(const char* run_dir, const char* scratch_dir, char** report);

CRLAB_API crlab_status crlab_gradcheck(int nets, uint64_t seed, char** report);

CRLAB_API crlab_status crlab_plot(const char* const* csv_paths, size_t n_paths, const char* title,
                                  const char* out_svg);

/* Resolves a relative run path against CRLAB_RUN_ROOT when set. */
CRLAB_API crlab_status crlab_resolve_run_path(const char* path, char** out);

#ifdef __cplusplus
}
#endif

#endif
