#ifndef BSN_AKA_H
#define BSN_AKA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define BSN_KEY_BYTES 20

#define BSN_DEFAULT_DELTA_T 5

#define BSN_DEFAULT_HOP_DELAY 1

typedef enum BsnStatus {
  BSN_STATUS_OK = 0,
  BSN_STATUS_NULL_POINTER = 1,
  BSN_STATUS_INVALID_UTF8 = 2,
  BSN_STATUS_INVALID_DEPLOYMENT = 3,
  BSN_STATUS_INVALID_POLICY = 4,
  BSN_STATUS_INVALID_SCRIPT = 5,
  BSN_STATUS_NO_SUCH_NODE = 6,
  BSN_STATUS_NO_SESSION = 7,
  BSN_STATUS_INVALID_ARGUMENT = 8,
  BSN_STATUS_PANIC = 9,
} BsnStatus;

typedef enum BsnOutcome {
  /**
   * Both ends hold the same session key.
   */
  BSN_OUTCOME_AGREED = 0,
  /**
   * The sensor finished but its key differs from the hub's.
   */
  BSN_OUTCOME_KEYS_DIFFER = 1,
  /**
   * Hub-only replay run that the hub authenticated.
   */
  BSN_OUTCOME_HUB_ACCEPTED = 2,
  BSN_OUTCOME_ABORTED = 3,
} BsnOutcome;

typedef enum BsnAbortReason {
  BSN_ABORT_REASON_NONE = 0,
  BSN_ABORT_REASON_UNKNOWN_INTERMEDIATE = 1,
  BSN_ABORT_REASON_STALE_TIMESTAMP = 2,
  BSN_ABORT_REASON_NO_MATCHING_SENSOR = 3,
  BSN_ABORT_REASON_WRONG_INTERMEDIATE = 4,
  BSN_ABORT_REASON_AUTH_FAILED = 5,
  BSN_ABORT_REASON_NO_PENDING_SESSION = 6,
  BSN_ABORT_REASON_MALFORMED = 7,
  BSN_ABORT_REASON_FRAME_LOST = 8,
} BsnAbortReason;

typedef enum BsnHop {
  BSN_HOP_SN_TO_IN = 0,
  BSN_HOP_IN_TO_HN = 1,
  BSN_HOP_HN_TO_IN = 2,
  BSN_HOP_IN_TO_SN = 3,
} BsnHop;

/**
 * Opaque deployment handle.
 */
typedef struct BsnWorld BsnWorld;

/**
 * Result of one run. `step` is 1..5 for aborts and 0 otherwise. Key
 * buffers are zero when the corresponding flag is false.
 */
typedef struct BsnSessionResult {
  enum BsnOutcome outcome;
  uint8_t step;
  enum BsnAbortReason reason;
  bool has_sn_key;
  bool has_hn_key;
  uint8_t sn_key[BSN_KEY_BYTES];
  uint8_t hn_key[BSN_KEY_BYTES];
} BsnSessionResult;

typedef struct BsnStorage {
  uint64_t sensor_bits;
  uint64_t intermediate_bits;
  uint64_t hub_bits;
} BsnStorage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Generates a deployment of `sensors` sensors and `intermediates` relays
 * from `seed` and stores a new handle in `*out`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one pointer.
 */
enum BsnStatus bsn_world_generate(size_t sensors,
                                  size_t intermediates,
                                  uint64_t seed,
                                  uint32_t delta_t,
                                  uint32_t hop_delay,
                                  struct BsnWorld **out);

/**
 * Builds a world from deployment-file text.
 *
 * # Safety
 * `deployment_toml` must be a NUL-terminated string and `out` a valid
 * pointer to writable storage for one pointer.
 */
enum BsnStatus bsn_world_from_deployment(const char *deployment_toml,
                                         uint32_t delta_t,
                                         uint32_t hop_delay,
                                         struct BsnWorld **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `world` must be null or a handle from this library not yet freed.
 */
void bsn_world_free(struct BsnWorld *world);

/**
 * Number of sensors, or 0 for a null handle.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
size_t bsn_world_sensor_count(const struct BsnWorld *world);

/**
 * Runs one handshake for `sensor` via `intermediate`. `script_toml` is
 * an adversary script (`[[actions]]` tables) or null for an honest run.
 *
 * # Safety
 * `world` must be a live handle, `script_toml` null or NUL-terminated,
 * and `result` a valid pointer to a `BsnSessionResult`.
 */
enum BsnStatus bsn_world_run(struct BsnWorld *world,
                             size_t sensor,
                             size_t intermediate,
                             uint64_t seed,
                             const char *script_toml,
                             struct BsnSessionResult *result);

/**
 * Replays the IN→HN frame of the most recent run into the hub at time
 * `at`.
 *
 * # Safety
 * `world` must be a live handle and `result` a valid pointer.
 */
enum BsnStatus bsn_world_replay_last(struct BsnWorld *world,
                                     uint64_t at,
                                     struct BsnSessionResult *result);

/**
 * Cost report of the most recent run as TOML text, or null if nothing
 * has run. Free with `bsn_string_free`.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
char *bsn_world_last_report(const struct BsnWorld *world);

/**
 * Transcript of the most recent run, one `direction,time,hex` line per
 * delivered frame, or null if nothing has run.
 *
 * # Safety
 * `world` must be null or a live handle.
 */
char *bsn_world_last_transcript(const struct BsnWorld *world);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void bsn_string_free(char *s);

/**
 * Storage footprint in bits for `sensors` sensors and `intermediates`
 * relays.
 */
struct BsnStorage bsn_storage(uint64_t sensors, uint64_t intermediates);

/**
 * SHA-1 of `len` bytes at `data`, written to the 20 bytes at `out`.
 *
 * # Safety
 * `data` must point to `len` readable bytes (or be null with `len` 0)
 * and `out` to 20 writable bytes.
 */
enum BsnStatus bsn_sha1(const uint8_t *data, size_t len, uint8_t *out);

/**
 * Description of the last failure on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *bsn_last_error_message(void);

/**
 * Encoded frame size in bits on `hop`.
 */
uint32_t bsn_hop_bits(enum BsnHop hop);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSN_AKA_H */
