/* Copyright 2026 The frappe-kit Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to frappe-kit. Every object is an opaque handle released with
 * its matching *_free function. Functions return a frappe_status; on failure
 * frappe_last_error_message() and frappe_last_error_kind() describe the
 * error for the calling thread.
 */

#ifndef FRAPPE_FRAPPE_H
#define FRAPPE_FRAPPE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FRAPPE_API __declspec(dllexport)
#else
#define FRAPPE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum frappe_status {
  FRAPPE_OK = 0,
  FRAPPE_ERROR_INTERNAL = 1,
  FRAPPE_ERROR_CONFIG = 2,       /* schema, parse, I/O, dimension, validation */
  FRAPPE_ERROR_NUMERIC = 3,      /* diverged training, empty groups, too few samples */
  FRAPPE_ERROR_PARTIAL = 4,      /* some sweep points failed */
  FRAPPE_ERROR_VERIFICATION = 5  /* verify-glm tolerance exceeded */
} frappe_status;

typedef struct frappe_dataset frappe_dataset;
typedef struct frappe_module frappe_module;
typedef struct frappe_run frappe_run;

typedef struct frappe_run_options {
  const char* base_dir; /* resolves relative paths in the config; NULL = cwd */
  uint64_t seed;        /* master seed override, used when has_seed != 0 */
  int has_seed;
  unsigned workers;     /* 0 = 1 */
} frappe_run_options;

FRAPPE_API const char* frappe_version(void);
FRAPPE_API const char* frappe_last_error_message(void);
/* e.g. "SchemaError", "EmptyGroup"; empty string when the last call succeeded. */
FRAPPE_API const char* frappe_last_error_kind(void);
FRAPPE_API void frappe_string_free(char* str);

/* datasets */
FRAPPE_API frappe_status frappe_dataset_load_csv(const char* path, const char* schema_json,
                                                 frappe_dataset** out);
FRAPPE_API frappe_status frappe_dataset_synth(const char* spec_json, frappe_dataset** out);
FRAPPE_API frappe_status frappe_dataset_write_csv(const frappe_dataset* data, const char* path);
FRAPPE_API size_t frappe_dataset_rows(const frappe_dataset* data);
FRAPPE_API size_t frappe_dataset_cols(const frappe_dataset* data);
FRAPPE_API size_t frappe_dataset_annotated(const frappe_dataset* data);
FRAPPE_API frappe_status frappe_dataset_subsample_sensitive(const frappe_dataset* data,
                                                            double fraction, uint64_t seed,
                                                            frappe_dataset** out);
FRAPPE_API void frappe_dataset_free(frappe_dataset* data);

/* score modules */
FRAPPE_API frappe_status frappe_module_from_json(const char* json, frappe_module** out);
FRAPPE_API frappe_status frappe_module_to_json(const frappe_module* module, char** out);
FRAPPE_API size_t frappe_module_parameter_count(const frappe_module* module);
/* Writes one score per row of data into scores (capacity n). */
FRAPPE_API frappe_status frappe_module_forward(const frappe_module* module,
                                               const frappe_dataset* data, double* scores,
                                               size_t n);
FRAPPE_API void frappe_module_free(frappe_module* module);

/* Metrics of binary predictions. sensitive uses NaN for unannotated rows.
 * Writes a JSON object {error, fpr_gap, sp_gap, meo} into *out_json. */
FRAPPE_API frappe_status frappe_metrics_json(const double* predictions, const double* labels,
                                             const double* sensitive, size_t n,
                                             char** out_json);

/* Commands: synth, train-base, train, sweep, eval, verify-glm,
 * analyze-posthoc, baseline-naive. On FRAPPE_OK, FRAPPE_ERROR_PARTIAL and
 * FRAPPE_ERROR_VERIFICATION a run handle with its artifacts is returned. */
FRAPPE_API frappe_status frappe_run_command(const char* command, const char* config_json,
                                            const frappe_run_options* options,
                                            frappe_run** out);
FRAPPE_API size_t frappe_run_artifact_count(const frappe_run* run);
FRAPPE_API const char* frappe_run_artifact_name(const frappe_run* run, size_t index);
FRAPPE_API const char* frappe_run_artifact_data(const frappe_run* run, size_t index,
                                                size_t* size);
FRAPPE_API const char* frappe_run_summary(const frappe_run* run);
FRAPPE_API void frappe_run_free(frappe_run* run);

#ifdef __cplusplus
}
#endif

#endif /* FRAPPE_FRAPPE_H */
