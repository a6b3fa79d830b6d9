#ifndef CFGCONF_H
#define CFGCONF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum CfgconfStatus {
  Ok = 0,
  /**
   * The spec failed validation; inspect the diagnostics.
   */
  ValidationError = 1,
  /**
   * A referenced file could not be read.
   */
  IoError = 2,
  /**
   * The drawn graph is above the layout size guard.
   */
  TooLarge = 3,
  /**
   * A required pointer argument was null or not valid UTF-8.
   */
  InvalidArgument = 4,
} CfgconfStatus;

/**
 * Opaque result: rendered output (when successful) plus diagnostics.
 */
typedef struct CfgconfResult CfgconfResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Render a CFGConf JSON spec to SVG.
 *
 * On return, `*out` holds a result handle (even on failure, so the
 * diagnostics can be read). Free it with `cfgconf_result_free`.
 *
 * # Safety
 * `spec_json` must point to a NUL-terminated UTF-8 string and `out` to a
 * writable pointer slot.
 */
enum CfgconfStatus cfgconf_render_svg(const char *spec_json, struct CfgconfResult **out);

/**
 * Emit the drawn graph as dot text; `annotated` adds the layout hints
 * (back-edge ports, constraint=false, invisible header-to-latch edges).
 *
 * # Safety
 * Same contract as [`cfgconf_render_svg`].
 */
enum CfgconfStatus cfgconf_emit_dot(const char *spec_json,
                                    bool annotated,
                                    struct CfgconfResult **out);

/**
 * The rendered artifact, or null when the run failed. Owned by the result
 * handle; do not free separately.
 *
 * # Safety
 * `result` must be a live handle from this library (or null).
 */
const char *cfgconf_result_output(const struct CfgconfResult *result);

/**
 * Number of diagnostic messages attached to the result.
 *
 * # Safety
 * `result` must be a live handle from this library (or null).
 */
uintptr_t cfgconf_result_diagnostic_count(const struct CfgconfResult *result);

/**
 * The `index`-th diagnostic as a formatted line, or null when out of
 * range. Owned by the result handle.
 *
 * # Safety
 * `result` must be a live handle from this library (or null).
 */
const char *cfgconf_result_diagnostic(const struct CfgconfResult *result, uintptr_t index);

/**
 * Release a result handle. Null is a no-op.
 *
 * # Safety
 * `result` must be a handle returned by this library, freed at most once.
 */
void cfgconf_result_free(struct CfgconfResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CFGCONF_H */
