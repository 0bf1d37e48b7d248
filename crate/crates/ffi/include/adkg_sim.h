#ifndef ADKG_SIM_H
#define ADKG_SIM_H

/* Generated by cbindgen from the adkg-sim-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a boundary call. Anything other than `Ok` leaves a message
 * in the thread's last-error slot.
 */
typedef enum AdkgSimStatus {
  ADKG_SIM_STATUS_OK = 0,
  ADKG_SIM_STATUS_NULL_ARGUMENT = 1,
  ADKG_SIM_STATUS_INVALID_UTF8 = 2,
  ADKG_SIM_STATUS_INVALID_CONFIG = 3,
  ADKG_SIM_STATUS_INTERNAL = 4,
} AdkgSimStatus;

/**
 * A validated experiment description, ready to run seeds.
 */
typedef struct AdkgSimScenario AdkgSimScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *adkg_sim_last_error(void);

/**
 * Static version string of the simulator library.
 */
const char *adkg_sim_version(void);

/**
 * Reference configuration in TOML with every default spelled out. Free
 * with `adkg_sim_string_free`.
 */
char *adkg_sim_reference_config(void);

/**
 * Parses and validates a TOML scenario description. On success stores a
 * handle in `out`; free it with `adkg_sim_scenario_free`.
 *
 * # Safety
 * `toml` must be a valid nul-terminated string and `out` a valid pointer.
 */
enum AdkgSimStatus adkg_sim_scenario_new(const char *toml, struct AdkgSimScenario **out);

/**
 * Releases a scenario handle. Null is a no-op.
 *
 * # Safety
 * `scenario` must be null or a pointer from `adkg_sim_scenario_new` that
 * has not been freed yet.
 */
void adkg_sim_scenario_free(struct AdkgSimScenario *scenario);

/**
 * Runs one seed and stores the result as a JSON document
 * `{metrics, events, check[, trace]}` in `out_json`. Free the string with
 * `adkg_sim_string_free`. Property violations do not fail the call; they
 * are listed under `check.violations`.
 *
 * # Safety
 * `scenario` must be a live handle and `out_json` a valid pointer.
 */
enum AdkgSimStatus adkg_sim_scenario_run_json(const struct AdkgSimScenario *scenario,
                                              uint64_t seed,
                                              bool trace,
                                              char **out_json);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or an unfreed string pointer from this library.
 */
void adkg_sim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADKG_SIM_H */
