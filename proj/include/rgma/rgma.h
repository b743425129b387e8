/* C interface to the R-GMA runtime: embedded nodes and a client for remote ones.
 *
 * Every function returning int returns RGMA_OK or an error status; the text of
 * the most recent error on the calling thread is available from rgma_last_error().
 * Strings returned through char** out-parameters are owned by the caller and
 * released with rgma_free_string(). Other returned const char* stay valid for
 * the lifetime of the handle they came from.
 */
#ifndef RGMA_RGMA_H
#define RGMA_RGMA_H

#include <stddef.h>
#include <stdint.h>

#if defined(RGMA_BUILDING)
#define RGMA_API __attribute__((visibility("default")))
#else
#define RGMA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct rgma_node rgma_node;
typedef struct rgma_client rgma_client;
typedef struct rgma_rowset rgma_rowset;
typedef struct rgma_stream rgma_stream;

typedef enum rgma_status {
  RGMA_OK = 0,
  RGMA_ERR_SYNTAX = 1,
  RGMA_ERR_SCHEMA = 2,
  RGMA_ERR_TYPE = 3,
  RGMA_ERR_UNSUPPORTED_FEATURE = 4,
  RGMA_ERR_KEY_MISMATCH = 5,
  RGMA_ERR_FRAME = 6,
  RGMA_ERR_PROTOCOL = 7,
  RGMA_ERR_UNKNOWN_COMPONENT = 8,
  RGMA_ERR_UNSUPPORTED_QUERY_CLASS = 9,
  RGMA_ERR_VIEW_VIOLATION = 10,
  RGMA_ERR_NOT_INSERTABLE = 11,
  RGMA_ERR_STORAGE = 12,
  RGMA_ERR_UNSUPPORTED_PRODUCER_TYPE = 13,
  RGMA_ERR_SINK_MISMATCH = 14,
  RGMA_ERR_SOURCE_UNSUPPORTED = 15,
  RGMA_ERR_SCENARIO = 16,
  RGMA_ERR_CONNECTION = 17,
  RGMA_ERR_LIMIT_EXCEEDED = 18,
  RGMA_ERR_INVALID_ARGUMENT = 19,
  RGMA_ERR_TIMEOUT = 20,
  RGMA_ERR_INTERNAL = 21
} rgma_status;

typedef enum rgma_value_type { RGMA_INT = 0, RGMA_REAL = 1, RGMA_STRING = 2 } rgma_value_type;

RGMA_API const char* rgma_last_error(void);
/* "SyntaxError", "ConnectionError", ... */
RGMA_API const char* rgma_status_name(int status);
/* One of trace, debug, info, warn, error, off. */
RGMA_API int rgma_set_log_level(const char* level);
RGMA_API void rgma_free_string(char* s);

/* ---- embedded node; config is the JSON document rgmad reads */
RGMA_API int rgma_node_start(const char* config_json, rgma_node** out);
RGMA_API const char* rgma_node_endpoint(const rgma_node* node);
RGMA_API int rgma_node_http_port(const rgma_node* node);
/* With unregister = 0 the node's components linger in the registry as after a crash. */
RGMA_API void rgma_node_stop(rgma_node* node, int unregister);
RGMA_API void rgma_node_free(rgma_node* node);

/* ---- client for one node, "host:port" */
RGMA_API int rgma_client_open(const char* endpoint, int timeout_ms, rgma_client** out);
RGMA_API void rgma_client_free(rgma_client* client);

/* Sends one request; `kind` is a message kind name such as "ListTables". */
RGMA_API int rgma_call(rgma_client* client, const char* kind, const char* body_json, char** reply_json);

RGMA_API int rgma_declare_table(rgma_client* client, const char* create_sql, const char* const* key, size_t key_len);
/* JSON array of {sql, key}. */
RGMA_API int rgma_tables(rgma_client* client, char** tables_json);
/* JSON {name, sql, key, timestamp, columns: [{name, type}]}. */
RGMA_API int rgma_describe(rgma_client* client, const char* table, char** table_json);
/* JSON array of live registry entries. */
RGMA_API int rgma_entries(rgma_client* client, char** entries_json);

RGMA_API int rgma_create_producer(rgma_client* client, const char* spec_json, char** component_id);
RGMA_API int rgma_create_archiver(rgma_client* client, const char* spec_json, char** component_id);
RGMA_API int rgma_insert(rgma_client* client, const char* body_json, size_t* inserted);
RGMA_API int rgma_close_component(rgma_client* client, const char* component_id);

/* ---- one-shot queries; cls is "latest" or "history" */
RGMA_API int rgma_query(rgma_client* client, const char* sql, const char* cls, rgma_rowset** out);

RGMA_API size_t rgma_rowset_columns(const rgma_rowset* rs);
RGMA_API const char* rgma_rowset_column_name(const rgma_rowset* rs, size_t column);
RGMA_API size_t rgma_rowset_rows(const rgma_rowset* rs);
RGMA_API rgma_value_type rgma_rowset_type(const rgma_rowset* rs, size_t row, size_t column);
RGMA_API int64_t rgma_rowset_int(const rgma_rowset* rs, size_t row, size_t column);
RGMA_API double rgma_rowset_real(const rgma_rowset* rs, size_t row, size_t column);
/* Plain text form of any value. */
RGMA_API const char* rgma_rowset_text(const rgma_rowset* rs, size_t row, size_t column);
/* Producer a continuous row came from; "" for one-shot rows. */
RGMA_API const char* rgma_rowset_origin(const rgma_rowset* rs, size_t row);
RGMA_API int rgma_rowset_no_producers(const rgma_rowset* rs);
/* One line per producer that failed to answer: "id: message". */
RGMA_API size_t rgma_rowset_failures(const rgma_rowset* rs);
RGMA_API const char* rgma_rowset_failure(const rgma_rowset* rs, size_t index);
/* JSON {columns, rows, noProducers}. */
RGMA_API int rgma_rowset_json(const rgma_rowset* rs, char** json);
RGMA_API void rgma_rowset_free(rgma_rowset* rs);

/* ---- continuous queries */
RGMA_API int rgma_subscribe(rgma_client* client, const char* sql, rgma_stream** out);
RGMA_API size_t rgma_stream_columns(const rgma_stream* q);
RGMA_API const char* rgma_stream_column_name(const rgma_stream* q, size_t column);
RGMA_API int rgma_stream_no_producers(const rgma_stream* q);
/* Rows arriving within the timeout (possibly none). */
RGMA_API int rgma_stream_next(rgma_stream* q, int timeout_ms, rgma_rowset** out);
RGMA_API int rgma_stream_finished(const rgma_stream* q);
RGMA_API void rgma_stream_free(rgma_stream* q);

#ifdef __cplusplus
}
#endif

#endif
