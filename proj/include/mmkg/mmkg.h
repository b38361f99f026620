/* C interface to the mmkg engine. All functions return an mmkg_status; on
 * failure mmkg_last_error() describes the problem (per thread). Strings
 * returned through char** belong to the caller and are released with
 * mmkg_string_free. */
#ifndef MMKG_MMKG_H
#define MMKG_MMKG_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(MMKG_BUILDING_LIBRARY)
#define MMKG_API __declspec(dllexport)
#else
#define MMKG_API __declspec(dllimport)
#endif
#else
#define MMKG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mmkg_status {
  MMKG_OK = 0,
  MMKG_ERR_IO = 1,
  MMKG_ERR_PARSE = 2,
  MMKG_ERR_INVALID_ARGUMENT = 3,
  MMKG_ERR_NOT_FOUND = 4,
  MMKG_ERR_NUMERIC = 5,
  MMKG_ERR_CONFIG = 6,
  MMKG_ERR_INTERNAL = 100
} mmkg_status;

typedef struct mmkg_config mmkg_config;
typedef struct mmkg_graph mmkg_graph;
typedef struct mmkg_model mmkg_model;

MMKG_API const char* mmkg_version(void);
MMKG_API const char* mmkg_last_error(void);
MMKG_API const char* mmkg_status_name(mmkg_status status);
MMKG_API void mmkg_string_free(char* s);

/* Run configuration (INI). Keys are "section.key". */
MMKG_API mmkg_status mmkg_config_new(mmkg_config** out);
MMKG_API mmkg_status mmkg_config_load(const char* path, mmkg_config** out);
MMKG_API mmkg_status mmkg_config_parse(const char* text, mmkg_config** out);
MMKG_API mmkg_status mmkg_config_set(mmkg_config* config, const char* key, const char* value);
/* *value is NULL when the key is unset. */
MMKG_API mmkg_status mmkg_config_get(const mmkg_config* config, const char* key, char** value);
MMKG_API mmkg_status mmkg_config_to_ini(const mmkg_config* config, char** ini);
MMKG_API void mmkg_config_free(mmkg_config* config);

/* Runs a pipeline command: "split", "train", "pretrain", "hpo", "evaluate",
 * "analyze-degree" or "benchmark". summary_json may be NULL. */
MMKG_API mmkg_status mmkg_run(const mmkg_config* config, const char* command, char** summary_json);

MMKG_API mmkg_status mmkg_graph_load(const char* triples_path, mmkg_graph** out);
MMKG_API mmkg_status mmkg_graph_load_types(mmkg_graph* graph, const char* path);
MMKG_API mmkg_status mmkg_graph_attach_attributes(mmkg_graph* graph, const char* path);
MMKG_API mmkg_status mmkg_graph_counts(const mmkg_graph* graph, size_t* entities, size_t* relations,
                                       size_t* triples);
MMKG_API mmkg_status mmkg_graph_degree_table_json(const mmkg_graph* graph, char** json);
MMKG_API void mmkg_graph_free(mmkg_graph* graph);

MMKG_API mmkg_status mmkg_model_load(const char* checkpoint_dir, mmkg_model** out);
/* dim: embedding dimension n; width: doubles per entity embedding. */
MMKG_API mmkg_status mmkg_model_dims(const mmkg_model* model, size_t* dim, size_t* width);
MMKG_API mmkg_status mmkg_model_score(const mmkg_model* model, const char* head,
                                      const char* relation, const char* tail, double* score);
/* Writes min(capacity, width) values; *written receives the full width. */
MMKG_API mmkg_status mmkg_model_embed(const mmkg_model* model, const char* entity, double* values,
                                      size_t capacity, size_t* written);
MMKG_API void mmkg_model_free(mmkg_model* model);

/* Welch's two-sample t test, two-sided p. */
MMKG_API mmkg_status mmkg_welch_test(const double* a, size_t na, const double* b, size_t nb,
                                     double* t, double* dof, double* p);

#ifdef __cplusplus
}
#endif

#endif
