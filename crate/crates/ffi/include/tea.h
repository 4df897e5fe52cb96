#ifndef TEA_H
#define TEA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible entry point. Codes 1 to 10 mirror the
 * kernel's error kinds.
 */
typedef enum TeaStatus {
  TEA_STATUS_OK = 0,
  TEA_STATUS_NOT_FOUND = 1,
  TEA_STATUS_NAME_CONFLICT = 2,
  TEA_STATUS_VERSION_NOT_FOUND = 3,
  TEA_STATUS_VALIDATION_FAILED = 4,
  TEA_STATUS_ACTION_NOT_FOUND = 5,
  TEA_STATUS_BACKEND_FAILURE = 6,
  TEA_STATUS_PROTOCOL_ERROR = 7,
  TEA_STATUS_LIFECYCLE_VIOLATION = 8,
  TEA_STATUS_EVOLUTION_REJECTED = 9,
  TEA_STATUS_PERSISTENCE_ERROR = 10,
  /**
   * A null pointer or non-UTF-8 string was passed.
   */
  TEA_STATUS_INVALID_ARGUMENT = 64,
  /**
   * The call panicked; the runtime should be discarded.
   */
  TEA_STATUS_PANIC = 65,
} TeaStatus;

/**
 * Opaque kernel handle.
 */
typedef struct TeaRuntime TeaRuntime;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an empty runtime with the built-in behaviors. Never null.
 */
struct TeaRuntime *tea_runtime_new(void);

/**
 * Creates a runtime rooted at `data_dir`, loading its manifests when the
 * directory exists. On success `*out` receives the handle.
 *
 * # Safety
 * `data_dir` must be a valid C string; `out` must be writable.
 */
enum TeaStatus tea_runtime_open(const char *data_dir, struct TeaRuntime **out);

/**
 * Releases a runtime. Null is ignored.
 *
 * # Safety
 * `rt` must come from this library and not be used afterwards.
 */
void tea_runtime_free(struct TeaRuntime *rt);

/**
 * Handles one request envelope and returns the response envelope as a
 * single line without the trailing newline. Returns null only when `rt`
 * is null.
 *
 * # Safety
 * `rt` must be a live handle; `request` a valid C string or null.
 */
char *tea_dispatch(const struct TeaRuntime *rt, const char *request);

/**
 * Runs one op with `params_json` (a mapping, or null for none). On success
 * `*out_json` holds the canonical result; on failure it holds
 * `{"detail":..,"kind":..,"reasons":[..]}`. The caller frees `*out_json`.
 *
 * # Safety
 * `rt` must be a live handle; `op` a valid C string; `params_json` a valid
 * C string or null; `out_json` writable or null.
 */
enum TeaStatus tea_call(const struct TeaRuntime *rt,
                        const char *op,
                        const char *params_json,
                        char **out_json);

/**
 * Writes the whole state under `dir`.
 *
 * # Safety
 * `rt` must be a live handle; `dir` a valid C string.
 */
enum TeaStatus tea_save(const struct TeaRuntime *rt, const char *dir);

/**
 * Replaces the state with what `dir` holds. Nothing changes on failure.
 *
 * # Safety
 * `rt` must be a live handle; `dir` a valid C string.
 */
enum TeaStatus tea_load(const struct TeaRuntime *rt, const char *dir);

/**
 * Static name of a status code, e.g. "NotFound". Never null.
 */
const char *tea_status_name(enum TeaStatus status);

/**
 * Library version as a static string.
 */
const char *tea_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void tea_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEA_H */
