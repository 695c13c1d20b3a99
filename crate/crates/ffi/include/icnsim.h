#ifndef ICNSIM_H
#define ICNSIM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IcnsimStatus {
  ICNSIM_STATUS_OK = 0,
  ICNSIM_STATUS_NULL_POINTER = 1,
  ICNSIM_STATUS_INVALID_UTF8 = 2,
  ICNSIM_STATUS_INVALID_SPEC = 3,
  ICNSIM_STATUS_SIMULATION = 4,
  ICNSIM_STATUS_DECODE = 5,
  ICNSIM_STATUS_BUFFER_TOO_SMALL = 6,
  ICNSIM_STATUS_NOT_FOUND = 7,
  ICNSIM_STATUS_INVALID_ARGUMENT = 8,
  ICNSIM_STATUS_PANIC = 9,
} IcnsimStatus;

/**
 * Parsed and validated topology.
 */
typedef struct IcnsimSpec IcnsimSpec;

/**
 * A simulated deployment built from an [`IcnsimSpec`].
 */
typedef struct IcnsimWorld IcnsimWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *icnsim_status_str(enum IcnsimStatus status);

/**
 * Copies the calling thread's last error message.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes; `needed` may be null.
 */
enum IcnsimStatus icnsim_last_error(char *buf, size_t cap, size_t *needed);

/**
 * Parses a topology from NUL-terminated JSON.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum IcnsimStatus icnsim_spec_from_json(const char *json, struct IcnsimSpec **out);

/**
 * Generates a random connected topology.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IcnsimStatus icnsim_spec_generate(size_t switches,
                                       size_t links,
                                       size_t hosts,
                                       uint64_t seed,
                                       struct IcnsimSpec **out);

/**
 * Serializes a topology as JSON.
 *
 * # Safety
 * `spec` must come from this library; `buf` must be valid for `cap` bytes.
 */
enum IcnsimStatus icnsim_spec_to_json(const struct IcnsimSpec *spec,
                                      char *buf,
                                      size_t cap,
                                      size_t *needed);

/**
 * # Safety
 * `spec` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void icnsim_spec_free(struct IcnsimSpec *spec);

/**
 * Builds a simulation. `spec` stays owned by the caller.
 *
 * # Safety
 * `spec` must come from this library and `out` be a valid pointer.
 */
enum IcnsimStatus icnsim_world_new(const struct IcnsimSpec *spec, struct IcnsimWorld **out);

/**
 * Runs until no events remain and checks that every node bootstrapped.
 *
 * # Safety
 * `world` must come from this library.
 */
enum IcnsimStatus icnsim_world_run(struct IcnsimWorld *world);

/**
 * Current simulated time in microseconds; 0 for a null handle.
 *
 * # Safety
 * `world` must come from this library or be null.
 */
uint64_t icnsim_world_now_us(const struct IcnsimWorld *world);

/**
 * Start and end of the span named `label`, e.g. `"host:h1"`.
 *
 * # Safety
 * `world` must come from this library, `label` be a C string and the
 * outputs valid pointers.
 */
enum IcnsimStatus icnsim_world_span(const struct IcnsimWorld *world,
                                    const char *label,
                                    uint64_t *start_us,
                                    uint64_t *end_us);

/**
 * The span report as CSV text.
 *
 * # Safety
 * `world` must come from this library; `buf` must be valid for `cap` bytes.
 */
enum IcnsimStatus icnsim_world_report_csv(const struct IcnsimWorld *world,
                                          char *buf,
                                          size_t cap,
                                          size_t *needed);

/**
 * # Safety
 * `world` must come from this library and not be used afterwards. Null
 * is ignored.
 */
void icnsim_world_free(struct IcnsimWorld *world);

/**
 * Checks that `frame` decodes for filter width `m` and reports its type
 * byte (0x01 to 0x07 for protocol messages, 0x10 to 0x12 for control).
 *
 * # Safety
 * `frame` must be valid for `len` bytes and `type_out` a valid pointer.
 */
enum IcnsimStatus icnsim_frame_check(const uint8_t *frame, size_t len, size_t m, uint8_t *type_out);

/**
 * Encodes a DiscoveryRequest carrying `nonce`.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes; `needed` may be null.
 */
enum IcnsimStatus icnsim_encode_discovery_request(uint64_t nonce,
                                                  uint8_t *buf,
                                                  size_t cap,
                                                  size_t *needed);

/**
 * Sets `*result` to whether every bit of `lid` is set in `fid`. Both are
 * `len` bytes, MSB first.
 *
 * # Safety
 * `fid` and `lid` must be valid for `len` bytes and `result` a valid
 * pointer.
 */
enum IcnsimStatus icnsim_fid_matches(const uint8_t *fid,
                                     const uint8_t *lid,
                                     size_t len,
                                     bool *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICNSIM_H */
