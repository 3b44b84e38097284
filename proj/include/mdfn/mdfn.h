/* C interface to the dialogue response-selection core. All functions return
 * MDFN_OK (0) on success or a nonzero error code; mdfn_last_error() holds a
 * thread-local description of the most recent failure. Strings returned
 * through char** out-parameters are malloc'd JSON documents owned by the
 * caller; release them with mdfn_string_free(). */
#ifndef MDFN_H
#define MDFN_H

#ifdef __cplusplus
extern "C" {
#endif

#define MDFN_OK 0

/* Opaque handle over a loaded checkpoint (model + vocabulary + configs). */
typedef struct mdfn_model mdfn_model;

typedef void (*mdfn_log_fn)(const char* line, void* user);

const char* mdfn_last_error(void);
const char* mdfn_error_code_name(int code);
void mdfn_string_free(char* s);

/* Generates a synthetic corpus (train/valid/test JSONL + vocab.txt) into
 * out_dir. synth_config_json documents task, sizes and seed; byte-identical
 * output for identical configs. */
int mdfn_gen_data(const char* synth_config_json, const char* out_dir);

/* Trains a model on <data_dir>/{train,valid}.jsonl + vocab.txt. Optional
 * model_spec_json / optim_json override defaults; ablations_csv applies
 * named presets (comma-separated) on top. seed_override replaces the
 * optimizer seed when has_seed_override is nonzero. Writes <out_dir>/best
 * and <out_dir>/train_log.csv; summary_json_out receives the run summary. */
int mdfn_train(const char* data_dir, const char* model_spec_json,
               const char* optim_json, const char* ablations_csv,
               int has_seed_override, unsigned long long seed_override,
               const char* out_dir, mdfn_log_fn log, void* log_user,
               char** summary_json_out);

int mdfn_model_open(const char* checkpoint_path, mdfn_model** out);
void mdfn_model_close(mdfn_model* m);

/* Ranking metrics over a JSONL dataset; threads >= 1 parallelizes scoring
 * without changing results. */
int mdfn_eval(mdfn_model* m, const char* jsonl_path, int threads,
              char** metrics_json_out);

/* Per-candidate matching scores for every line of a JSONL file. */
int mdfn_rank(mdfn_model* m, const char* jsonl_path, char** result_json_out);

/* Attention-mask grids and gate statistics for one dataset line. With a
 * checkpoint the trained model supplies vocabulary and gates; otherwise a
 * seed-initialized default model over the line's own vocabulary is used. */
int mdfn_inspect_masks(const char* jsonl_path, int index,
                       const char* checkpoint_path, unsigned long long seed,
                       char** json_out);

#ifdef __cplusplus
}
#endif

#endif /* MDFN_H */
