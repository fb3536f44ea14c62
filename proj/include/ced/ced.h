/* C interface to the event detection toolkit.
 *
 * Every object is an opaque handle released with its *_free function. Every
 * fallible call returns a ced_status; on failure ced_last_error() describes
 * the problem for the calling thread. Strings handed out through char**
 * parameters are owned by the caller and released with ced_string_free.
 * Configuration and reports travel as JSON text; a NULL config means defaults.
 */
#ifndef CED_CED_H
#define CED_CED_H

#include <stddef.h>
#include <stdint.h>

#if defined(CED_BUILDING_LIBRARY)
#define CED_API __attribute__((visibility("default")))
#else
#define CED_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ced_status {
  CED_OK = 0,
  CED_E_VALIDATION = 1, /* bad input: dimensions, labels, config, parse errors */
  CED_E_RUNTIME = 2     /* I/O and other failures */
} ced_status;

typedef struct ced_dataset ced_dataset;       /* labelled or unlabelled feature sequences */
typedef struct ced_codebook ced_codebook;     /* temporal k-means codebook */
typedef struct ced_vocab ced_vocab;           /* semantic atoms and word embeddings */
typedef struct ced_encoded ced_encoded;       /* sparse-coded sequences */
typedef struct ced_model ced_model;           /* per-class linear detectors */
typedef struct ced_detections ced_detections; /* detector output, one per sequence */
typedef struct ced_table ced_table;           /* auto-labelling lookup table */
typedef struct ced_stream ced_stream;         /* frame-at-a-time detector */

CED_API const char* ced_version(void);
CED_API const char* ced_last_error(void);
/* Name of the error kind behind the last failure, e.g. "DimensionMismatch". */
CED_API const char* ced_last_error_kind(void);
CED_API void ced_string_free(char* s);

/* Default run configuration: {"seed", "jobs", "synth", "codebook", "vocab", "train", "detect", "compare"}. */
CED_API ced_status ced_default_config(char** config_json);

/* Provenance arguments below are optional JSON objects embedded into the written artifact. */

/* ---- datasets ---- */
CED_API ced_status ced_dataset_load(const char* path, ced_dataset** out);
/* Loads without checking sequence invariants; pair with ced_dataset_validate. */
CED_API ced_status ced_dataset_load_unchecked(const char* path, ced_dataset** out);
CED_API ced_status ced_dataset_save(const ced_dataset* ds, const char* path, const char* provenance_json);
CED_API size_t ced_dataset_size(const ced_dataset* ds);
/* Lists every violation as JSON; returns CED_E_VALIDATION when there is at least one. */
CED_API ced_status ced_dataset_validate(const ced_dataset* ds, int require_semantic, char** report_json);
/* Copy with every frame label removed. */
CED_API ced_status ced_dataset_strip_labels(const ced_dataset* ds, ced_dataset** out);
CED_API void ced_dataset_free(ced_dataset* ds);

/* ---- synthetic data ---- */
CED_API ced_status ced_synth_default_config(char** config_json);
CED_API ced_status ced_synth_generate(const char* config_json, size_t n_videos, ced_dataset** out);
CED_API ced_status ced_synth_write_embeddings(const char* config_json, const char* path);
CED_API ced_status ced_synth_perfect_table(const char* config_json, char** table_json);

/* ---- codebook and vocabulary ---- */
CED_API ced_status ced_codebook_build(const ced_dataset* ds, const char* kmeans_json, double lambda, size_t jobs,
                                      ced_codebook** out);
CED_API ced_status ced_codebook_load(const char* path, ced_codebook** out);
CED_API ced_status ced_codebook_save(const ced_codebook* cb, const char* path, const char* provenance_json);
CED_API size_t ced_codebook_size(const ced_codebook* cb);
CED_API void ced_codebook_free(ced_codebook* cb);

/* embeddings_path may be NULL when frames carry semantic vectors instead of words. */
CED_API ced_status ced_vocab_build(const ced_dataset* ds, const char* embeddings_path, const char* vocab_json,
                                   size_t jobs, ced_vocab** out);
CED_API ced_status ced_vocab_load(const char* path, ced_vocab** out);
CED_API ced_status ced_vocab_save(const ced_vocab* v, const char* path, const char* provenance_json);
CED_API void ced_vocab_free(ced_vocab* v);

/* ---- encoding ---- */
/* vocab may be NULL: the semantic track is then left empty. */
CED_API ced_status ced_encode(const ced_dataset* ds, const ced_codebook* cb, const ced_vocab* vocab, size_t jobs,
                              ced_encoded** out);
CED_API ced_status ced_encoded_load(const char* path, ced_encoded** out);
CED_API ced_status ced_encoded_save(const ced_encoded* e, const char* path, const char* provenance_json);
CED_API size_t ced_encoded_size(const ced_encoded* e);
/* Frame count and code dimension of sequence i. */
CED_API ced_status ced_encoded_shape(const ced_encoded* e, size_t i, size_t* frames, size_t* code_dim);
/* Copies row f of sequence i's temporal (track 0) or semantic (track 1) codes into out[code_dim]. */
CED_API ced_status ced_encoded_codes(const ced_encoded* e, size_t i, int track, size_t f, double* out);
CED_API void ced_encoded_free(ced_encoded* e);

/* ---- training ---- */
/* classes_json: JSON array of class names, or NULL for every non-background label present.
 * report_json may be NULL. */
CED_API ced_status ced_train(const ced_encoded* data, const char* classes_json, const char* train_json,
                             ced_model** out, char** report_json);
CED_API ced_status ced_model_load(const char* path, ced_model** out);
CED_API ced_status ced_model_save(const ced_model* m, const char* path, const char* provenance_json);
CED_API ced_status ced_model_to_json(const ced_model* m, char** json);
CED_API int ced_model_converged(const ced_model* m);
CED_API void ced_model_free(ced_model* m);

CED_API ced_status ced_risk_bound(const ced_model* m, const ced_encoded* data, char** report_json);
CED_API ced_status ced_tune_thresholds(ced_model* m, const ced_encoded* data, const char* detect_json, size_t jobs);

/* ---- detection ---- */
CED_API ced_status ced_detect(const ced_model* m, const ced_encoded* data, const char* detect_json, size_t jobs,
                              ced_detections** out);
CED_API ced_status ced_detections_save(const ced_detections* d, const char* path, const char* provenance_json);
CED_API ced_status ced_detections_to_json(const ced_detections* d, char** json);
CED_API void ced_detections_free(ced_detections* d);

CED_API ced_status ced_stream_open(const ced_model* m, const char* detect_json, const char* id, ced_stream** out);
/* semantic may be NULL when the model scores temporal codes only. label_out (optional) receives the label. */
CED_API ced_status ced_stream_push(ced_stream* s, const double* temporal, size_t temporal_len, const double* semantic,
                                   size_t semantic_len, char** label_out, double* score_out);
CED_API ced_status ced_stream_finish(ced_stream* s, char** result_json);
CED_API void ced_stream_free(ced_stream* s);

/* ---- evaluation ---- */
CED_API ced_status ced_evaluate(const ced_model* m, const ced_encoded* test, const char* detect_json, size_t jobs,
                                char** report_json, char** table_text, char** csv_text);
/* compare_json: {"train": {...}, "detect": {...}, "combos": [...], "tune_thresholds": bool}. */
CED_API ced_status ced_compare(const ced_encoded* train, const ced_encoded* test, const char* compare_json, size_t jobs,
                               char** report_json, char** table_text, char** csv_text);

/* ---- auto-labelling ---- */
CED_API ced_status ced_table_load(const char* path, ced_table** out);
CED_API ced_status ced_table_parse(const char* table_json, ced_table** out);
CED_API void ced_table_free(ced_table* t);
/* Per-sequence frame labels as a JSON array of arrays. */
CED_API ced_status ced_label_frames(const ced_dataset* ds, const ced_table* t, char** labels_json);
/* autolabel_json: {"min_run": n}. *out is set to NULL when every class was dropped; the call still
 * succeeds and the report says why. */
CED_API ced_status ced_autolabel_train(const ced_dataset* ds, const ced_table* t, const ced_codebook* cb,
                                       const ced_vocab* vocab, const char* train_json, const char* autolabel_json,
                                       size_t jobs, ced_model** out, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* CED_CED_H */
