#ifndef FORCESTRAT_H
#define FORCESTRAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FS_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range, non-finite or not valid UTF-8.
   */
  FS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read.
   */
  FS_STATUS_IO = 3,
  /**
   * A config or checkpoint could not be parsed or is inconsistent.
   */
  FS_STATUS_FORMAT = 4,
  /**
   * The simulation rejected a step.
   */
  FS_STATUS_SIMULATION = 5,
  /**
   * An internal invariant failed. The handle involved should be freed.
   */
  FS_STATUS_INTERNAL = 6,
} FsStatus;

/**
 * How a policy encodes its feature history.
 */
typedef enum FsEncoding {
  /**
   * Re-encode the recent window from a zero state on every call.
   */
  FS_ENCODING_SLIDING_WINDOW = 0,
  /**
   * Carry the recurrent state across calls.
   */
  FS_ENCODING_INCREMENTAL = 1,
} FsEncoding;

/**
 * Opaque policy handle owning its checkpoint and random stream.
 */
typedef struct FsPolicy FsPolicy;

/**
 * Opaque simulator handle.
 */
typedef struct FsSim FsSim;

/**
 * Snapshot of the simulated part.
 */
typedef struct FsState {
  /**
   * Simulation time (s).
   */
  double t;
  /**
   * `x`, `z` (m) and `theta` (rad).
   */
  double pose[3];
  /**
   * `vx`, `vz` (m/s) and `omega` (rad/s).
   */
  double twist[3];
  /**
   * Environment reaction on the part during the last step: `fx`, `fz` (N), `tau` (N m).
   */
  double contact_wrench[3];
  /**
   * Distance of the part position to the goal (m).
   */
  double goal_distance;
  bool in_contact;
} FsState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *fs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fs_version(void);

/**
 * Creates a simulator at a seeded random start pose.
 *
 * `config_toml` is the text of a simulator config, or null for the defaults.
 *
 * # Safety
 * `config_toml` must be null or a valid NUL-terminated string, and `out` a valid pointer.
 */
enum FsStatus fs_sim_new(const char *config_toml, uint64_t seed, struct FsSim **out);

/**
 * Releases a simulator. Null is ignored.
 *
 * # Safety
 * `sim` must be null or a handle from [`fs_sim_new`] that was not freed yet.
 */
void fs_sim_free(struct FsSim *sim);

/**
 * Moves the part to a new seeded random start pose at rest.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum FsStatus fs_sim_reset(struct FsSim *sim, uint64_t seed);

/**
 * Copies the current state into `out`.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum FsStatus fs_sim_state(const struct FsSim *sim, struct FsState *out);

/**
 * Advances one step under the applied wrench `[fx, fz, tau]`, clamped to the
 * configured limits. Writes the new state to `out` unless it is null.
 *
 * # Safety
 * `sim` must be a live handle, `wrench` must point to three doubles and `out`
 * must be null or valid.
 */
enum FsStatus fs_sim_step(struct FsSim *sim, const double *wrench, struct FsState *out);

/**
 * Loads a checkpoint file as a policy sampling with `temperature` from a stream
 * seeded by `seed`. `encoding` is an [`FsEncoding`] value. Commands are clamped to the wrench limits of `sim`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string, `sim` a live handle and `out` valid.
 */
enum FsStatus fs_policy_load(const char *path,
                             const struct FsSim *sim,
                             uint32_t encoding,
                             double temperature,
                             uint64_t seed,
                             struct FsPolicy **out);

/**
 * Releases a policy. Null is ignored.
 *
 * # Safety
 * `policy` must be null or a handle from [`fs_policy_load`] that was not freed yet.
 */
void fs_policy_free(struct FsPolicy *policy);

/**
 * Starts a new episode from the current state of `sim`.
 *
 * # Safety
 * Both handles must be live.
 */
enum FsStatus fs_policy_reset(struct FsPolicy *policy, const struct FsSim *sim);

/**
 * Samples the next reference wrench for the current state of `sim` into
 * `out[0..3]`. Call once per model tick; the state and command of the previous
 * call form the newest history entry.
 *
 * # Safety
 * Both handles must be live and `out` must point to three writable doubles.
 */
enum FsStatus fs_policy_act(struct FsPolicy *policy, const struct FsSim *sim, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORCESTRAT_H */
