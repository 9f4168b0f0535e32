#ifndef PDEX_H
#define PDEX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum {
  PDEX_STATUS_OK = 0,
  // A required pointer argument was null.
  PDEX_STATUS_NULL_POINTER = 1,
  // Bad configuration, argument value or string encoding.
  PDEX_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read or written.
  PDEX_STATUS_IO = 3,
  // A file was read but its contents are malformed.
  PDEX_STATUS_FORMAT = 4,
  // A numerical failure: pole hit, unstable solver, degenerate library.
  PDEX_STATUS_NUMERICAL = 5,
  // An internal error or a caught panic.
  PDEX_STATUS_INTERNAL = 6,
} PdexStatus;

// Grid dataset handle.
typedef struct PdexDataset PdexDataset;

// Trained network handle.
typedef struct PdexNetwork PdexNetwork;

// Ranked candidate report handle.
typedef struct PdexReport PdexReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none.
//
// The pointer stays valid until the next failing call on this thread.
const char *pdex_last_error(void);

// Library version as a static NUL-terminated string.
const char *pdex_version(void);

// Solves a benchmark equation (`"heat"`, `"burgers"`, `"kdv"`).
//
// `ic` may be null for the default initial condition; a NaN `coefficient`
// and zero `nx`/`nt` select the per-equation defaults.
//
// # Safety
// String arguments must be null or NUL-terminated; `out` must be writable.
PdexStatus pdex_dataset_generate(const char *equation,
                                 const char *ic,
                                 double coefficient,
                                 size_t nx,
                                 size_t nt,
                                 PdexDataset **out);

// Reads a dataset file (or a complete-grid `t,x,u` CSV).
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
PdexStatus pdex_dataset_read(const char *path, PdexDataset **out);

// Writes a dataset file plus its JSON metadata sidecar.
//
// # Safety
// `ds` must be a live handle; `path` must be NUL-terminated.
PdexStatus pdex_dataset_write(const PdexDataset *ds, const char *path);

// Returns a noisy copy: Gaussian noise with std `noise` times the data std.
//
// # Safety
// `ds` must be a live handle; `out` must be writable.
PdexStatus pdex_dataset_corrupt(const PdexDataset *ds,
                                double noise,
                                uint64_t seed,
                                PdexDataset **out);

// Grid sizes: `n_t` rows (time) by `n_x` columns (space).
//
// # Safety
// `ds` must be a live handle; outputs must be writable.
PdexStatus pdex_dataset_shape(const PdexDataset *ds, size_t *n_t, size_t *n_x);

// Copies the spatial grid into `buf` (at least `n_x` values).
//
// # Safety
// `ds` must be a live handle; `buf` must hold `len` doubles.
PdexStatus pdex_dataset_x(const PdexDataset *ds, double *buf, size_t len);

// Copies the time grid into `buf` (at least `n_t` values).
//
// # Safety
// `ds` must be a live handle; `buf` must hold `len` doubles.
PdexStatus pdex_dataset_t(const PdexDataset *ds, double *buf, size_t len);

// Copies the values row-major (`values[i * n_x + j]` at `t[i]`, `x[j]`).
//
// # Safety
// `ds` must be a live handle; `buf` must hold `len` doubles.
PdexStatus pdex_dataset_values(const PdexDataset *ds, double *buf, size_t len);

// # Safety
// `ds` must be null or a handle not yet freed.
void pdex_dataset_free(PdexDataset *ds);

// Loads a network checkpoint (`u.json` / `n.json` of a run directory).
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
PdexStatus pdex_network_load(const char *path, PdexNetwork **out);

// Number of inputs the network expects.
//
// # Safety
// `net` must be a live handle; `out` must be writable.
PdexStatus pdex_network_input_width(const PdexNetwork *net, size_t *out);

// Evaluates the network at `input[0..len]`.
//
// # Safety
// `net` must be a live handle; `input` must hold `len` doubles; `out` writable.
PdexStatus pdex_network_eval(const PdexNetwork *net, const double *input, size_t len, double *out);

// Exact derivatives of a two-input `(x, t)` network at one point.
//
// Writes `value`, `d^k/dx^k` for `k = 1..=order` into `dx[0..order]`, and
// the first time derivative into `dt`. `order` is at most 4.
//
// # Safety
// `net` must be a live handle; `dx` must hold `order` doubles; outputs writable.
PdexStatus pdex_network_derivatives(const PdexNetwork *net,
                                    double x,
                                    double t,
                                    size_t order,
                                    double *value,
                                    double *dx,
                                    double *dt);

// # Safety
// `net` must be null or a handle not yet freed.
void pdex_network_free(PdexNetwork *net);

// Runs a full discovery from an experiment configuration given as JSON text.
//
// Long-running: trains both networks for the configured epochs.
//
// # Safety
// `config_json` must be NUL-terminated; `out` must be writable.
PdexStatus pdex_discover(const char *config_json, PdexReport **out);

// Reads a `report.json` written by a discovery run.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
PdexStatus pdex_report_read(const char *path, PdexReport **out);

// Number of ranked candidates (at most 5).
//
// # Safety
// `report` must be a live handle; `out` must be writable.
PdexStatus pdex_report_len(const PdexReport *report, size_t *out);

// Equation text of candidate `index` (0 = best), owned by the report.
//
// Returns null on a bad handle or index.
//
// # Safety
// `report` must be null or a live handle.
const char *pdex_report_equation(const PdexReport *report, size_t index);

// Ratio of candidate `index` to the next sparser one, in percent.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
PdexStatus pdex_report_ratio_percent(const PdexReport *report, size_t index, double *out);

// Whole report as pretty JSON, owned by the report.
//
// # Safety
// `report` must be null or a live handle.
const char *pdex_report_json(const PdexReport *report);

// # Safety
// `report` must be null or a handle not yet freed.
void pdex_report_free(PdexReport *report);

// Runs one self-check suite (1-5 or 9) and reports whether it passed.
//
// # Safety
// `passed` must be writable.
PdexStatus pdex_verify_suite(uint8_t suite, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDEX_H */
