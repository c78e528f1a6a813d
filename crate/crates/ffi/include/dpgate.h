#ifndef DPGATE_H
#define DPGATE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every `dpg_*` call.
 */
typedef enum DpgStatus {
  DPG_STATUS_OK = 0,
  /*
   A required pointer was null or a string was not valid UTF-8.
   */
  DPG_STATUS_INVALID_ARGUMENT = 1,
  /*
   Unknown API key.
   */
  DPG_STATUS_UNAUTHORIZED = 2,
  DPG_STATUS_FORBIDDEN = 3,
  DPG_STATUS_NOT_FOUND = 4,
  /*
   Duplicate active request, inactive product or a request already decided.
   */
  DPG_STATUS_CONFLICT = 5,
  /*
   No active access grant for the product.
   */
  DPG_STATUS_ACCESS_DENIED = 6,
  DPG_STATUS_INVALID_PURPOSE = 7,
  DPG_STATUS_PARSE_ERROR = 8,
  /*
   The query breaks the data contract (unknown column, forbidden construct, ...).
   */
  DPG_STATUS_CONTRACT_VIOLATION = 9,
  /*
   Registry, dataset or audit log could not be read or written.
   */
  DPG_STATUS_IO = 10,
  DPG_STATUS_INTERNAL = 11,
} DpgStatus;

/*
 An open gateway. Opaque to C callers.
 */
typedef struct DpgGateway DpgGateway;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Opens the registry at `registry_dir`. `audit_file` may be null for an
 in-memory audit log. On success `*out` owns a gateway to release with
 [`dpg_gateway_free`].

 # Safety
 String arguments are null or NUL-terminated; `out` is valid for writes.
 */
enum DpgStatus dpg_gateway_open(const char *registry_dir,
                                const char *audit_file,
                                struct DpgGateway **out);

/*
 Releases a gateway. Null is ignored.

 # Safety
 `gateway` came from [`dpg_gateway_open`] and is not used afterwards.
 */
void dpg_gateway_free(struct DpgGateway *gateway);

/*
 Searches active products. A null or blank `query` lists all of them.

 # Safety
 See [`dpg_gateway_open`].
 */
enum DpgStatus dpg_search(const struct DpgGateway *gateway,
                          const char *api_key,
                          const char *query,
                          char **out_json);

/*
 Product detail with the caller's access status.

 # Safety
 See [`dpg_gateway_open`].
 */
enum DpgStatus dpg_product_get(const struct DpgGateway *gateway,
                               const char *api_key,
                               const char *product_id,
                               char **out_json);

/*
 Files an access request. `category` may be null to classify `purpose`
 from its text.

 # Safety
 See [`dpg_gateway_open`].
 */
enum DpgStatus dpg_request_access(const struct DpgGateway *gateway,
                                  const char *api_key,
                                  const char *product_id,
                                  const char *purpose,
                                  const char *category,
                                  char **out_json);

/*
 Approves (`approve` true) or rejects a pending request as a member of the
 owning team. `note` may be null.

 # Safety
 See [`dpg_gateway_open`].
 */
enum DpgStatus dpg_decide(const struct DpgGateway *gateway,
                          const char *api_key,
                          const char *request_id,
                          bool approve,
                          const char *note,
                          char **out_json);

/*
 Runs a governed query. A governance rejection is not an error: the call
 returns `Ok` with `"status":"rejected"` and the reasons. `purpose` may be
 null to use the purpose of the grant.

 # Safety
 See [`dpg_gateway_open`].
 */
enum DpgStatus dpg_query(const struct DpgGateway *gateway,
                         const char *api_key,
                         const char *product_id,
                         const char *sql,
                         const char *purpose,
                         char **out_json);

/*
 Parses SQL and returns `{"sql": <canonical text>, "ast": <tree>}`.

 # Safety
 `sql` is null or NUL-terminated; `out_json` is valid for writes.
 */
enum DpgStatus dpg_sql_parse(const char *sql, char **out_json);

/*
 Writes the purpose category for free text, e.g. `analytics`.

 # Safety
 `text` is null or NUL-terminated; `out` is valid for writes.
 */
enum DpgStatus dpg_purpose_classify(const char *text, char **out);

/*
 Checks the hash chain of an audit file. Writes
 `{"status":"ok","records":N}` or `{"status":"broken","first_bad_seq":N}`;
 both are `Ok`. Unreadable files give `Io`.

 # Safety
 `path` is null or NUL-terminated; `out_json` is valid for writes.
 */
enum DpgStatus dpg_audit_verify(const char *path, char **out_json);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` came from a `dpg_*` out pointer and is not used afterwards.
 */
void dpg_string_free(char *s);

/*
 Message for the last failed call on this thread, or null after a
 successful one. Owned by the library; valid until the next `dpg_*` call.
 */
const char *dpg_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPGATE_H */
