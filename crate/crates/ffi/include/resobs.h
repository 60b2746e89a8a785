#ifndef RESOBS_H
#define RESOBS_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Subcommand selector for `resobs_run_pipeline`.
 */
typedef enum ResobsCommand {
  RESOBS_COMMAND_DESIGN = 0,
  RESOBS_COMMAND_SIMULATE = 1,
  RESOBS_COMMAND_VERIFY = 2,
} ResobsCommand;

/*
 Status codes; the first five match the command-line exit codes.
 */
typedef enum ResobsStatus {
  RESOBS_STATUS_OK = 0,
  RESOBS_STATUS_USAGE = 1,
  RESOBS_STATUS_INFEASIBLE = 2,
  RESOBS_STATUS_DIVERGENCE = 3,
  RESOBS_STATUS_VERIFICATION_FAILED = 4,
  RESOBS_STATUS_INVALID_ARGUMENT = 5,
  RESOBS_STATUS_PANIC = 6,
} ResobsStatus;

typedef struct ResobsDesign ResobsDesign;

typedef struct ResobsReport ResobsReport;

typedef struct ResobsScenario ResobsScenario;

typedef struct ResobsTrace ResobsTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer stays
 valid until the next call into this library on the same thread.
 */
const char *resobs_last_error(void);

/*
 # Safety
 `s` must be NULL or a string returned by this library.
 */
void resobs_string_free(char *s);

/*
 Loads and validates a TOML scenario file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ResobsStatus resobs_scenario_load(const char *path, struct ResobsScenario **out);

/*
 Parses and validates a TOML scenario held in memory.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
enum ResobsStatus resobs_scenario_parse(const char *text, struct ResobsScenario **out);

/*
 # Safety
 `sc` must be NULL or a handle from `resobs_scenario_load`/`_parse`.
 */
void resobs_scenario_free(struct ResobsScenario *sc);

/*
 Number of nodes, or 0 for a NULL handle.

 # Safety
 `sc` must be NULL or a live scenario handle.
 */
size_t resobs_scenario_node_count(const struct ResobsScenario *sc);

/*
 Replaces the attenuation levels and seed; a value is kept when its
 `has_*` flag is zero.

 # Safety
 `sc` must be a live scenario handle.
 */
enum ResobsStatus resobs_scenario_override(struct ResobsScenario *sc,
                                           bool has_gamma,
                                           double gamma,
                                           bool has_gamma_bar,
                                           double gamma_bar,
                                           bool has_seed,
                                           uint64_t seed);

/*
 Runs the LMI pre-pass and every node's Riccati integration.

 # Safety
 `sc` must be a live scenario handle; `out` must be writable.
 */
enum ResobsStatus resobs_design(const struct ResobsScenario *sc, struct ResobsDesign **out);

/*
 # Safety
 `d` must be NULL or a handle from `resobs_design`.
 */
void resobs_design_free(struct ResobsDesign *d);

/*
 Design report as JSON; release with `resobs_string_free`.

 # Safety
 `d` must be a live design handle; `out` must be writable.
 */
enum ResobsStatus resobs_design_report_json(const struct ResobsDesign *d, char **out);

/*
 Writes the gains on the design grid as CSV.

 # Safety
 `sc` and `d` must be live handles, `d` designed from `sc`; `path` must be a
 NUL-terminated string.
 */
enum ResobsStatus resobs_design_write_gains_csv(const struct ResobsScenario *sc,
                                                const struct ResobsDesign *d,
                                                const char *path);

/*
 Simulates the closed loop of `sc` with the gains in `d`.

 # Safety
 `sc` and `d` must be live handles, `d` designed from `sc`; `out` must be writable.
 */
enum ResobsStatus resobs_simulate(const struct ResobsScenario *sc,
                                  const struct ResobsDesign *d,
                                  struct ResobsTrace **out);

/*
 # Safety
 `t` must be NULL or a handle from `resobs_simulate`.
 */
void resobs_trace_free(struct ResobsTrace *t);

/*
 Number of samples, or 0 for a NULL handle.

 # Safety
 `t` must be NULL or a live trace handle.
 */
size_t resobs_trace_len(const struct ResobsTrace *t);

/*
 Copies `x(t_k)` into `buf`, which must hold `state_dim` values.

 # Safety
 `t` must be a live trace handle and `buf` must point to `len` writable doubles.
 */
enum ResobsStatus resobs_trace_state(const struct ResobsTrace *t,
                                     size_t k,
                                     double *buf,
                                     size_t len);

/*
 # Safety
 `t` must be a live trace handle; `path` must be a NUL-terminated string.
 */
enum ResobsStatus resobs_trace_write_csv(const struct ResobsTrace *t, const char *path);

/*
 Checks every bound and the oracle equivalence for `t`. Returns
 `RESOBS_STATUS_VERIFICATION_FAILED` (with the report still stored) when a
 check fails.

 # Safety
 All handles must be live and derived from `sc`; `out` must be writable.
 */
enum ResobsStatus resobs_verify(const struct ResobsScenario *sc,
                                const struct ResobsDesign *d,
                                const struct ResobsTrace *t,
                                struct ResobsReport **out);

/*
 # Safety
 `r` must be NULL or a handle from `resobs_verify`.
 */
void resobs_report_free(struct ResobsReport *r);

/*
 Whether every check passed; false for a NULL handle.

 # Safety
 `r` must be NULL or a live report handle.
 */
bool resobs_report_passed(const struct ResobsReport *r);

/*
 Verification report as JSON; release with `resobs_string_free`.

 # Safety
 `r` must be a live report handle; `out` must be writable.
 */
enum ResobsStatus resobs_report_json(const struct ResobsReport *r, char **out);

/*
 Runs a whole command on a scenario file and writes its artifacts to
 `out_dir`, like the command-line tool.

 # Safety
 `path` and `out_dir` must be NUL-terminated strings.
 */
enum ResobsStatus resobs_run_pipeline(const char *path,
                                      enum ResobsCommand command,
                                      const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESOBS_H */
