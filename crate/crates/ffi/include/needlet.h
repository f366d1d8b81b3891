#ifndef NEEDLET_H
#define NEEDLET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum NeedletStatus {
  NEEDLET_STATUS_OK = 0,
  NEEDLET_STATUS_NULL_POINTER = 1,
  NEEDLET_STATUS_INVALID_PARAMETER = 2,
  NEEDLET_STATUS_LENGTH_MISMATCH = 3,
  NEEDLET_STATUS_RESOURCE_CAP = 4,
  NEEDLET_STATUS_FORMAT = 5,
  NEEDLET_STATUS_IO = 6,
  NEEDLET_STATUS_PANIC = 7,
} NeedletStatus;

// Opaque coefficient pyramid handle.
typedef struct NeedletPyramid NeedletPyramid;

// Opaque frame handle.
typedef struct NeedletSystem NeedletSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on this thread.
const char *needlet_last_error(void);

// Builds a frame with bandwidth `B > 1` and levels `0..=j_max`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum NeedletStatus needlet_system_new(double bandwidth, size_t j_max, struct NeedletSystem **out);

// Releases a frame. Null is ignored.
//
// # Safety
// `sys` must be null or a handle from [`needlet_system_new`] not yet freed.
void needlet_system_free(struct NeedletSystem *sys);

// Number of levels, `j_max + 1`; zero for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t needlet_system_levels(const struct NeedletSystem *sys);

// Writes the per-level point counts N_j into `out[0..len]`, where `len`
// must equal the number of levels.
//
// # Safety
// `sys` must be a live handle and `out` must hold `len` elements.
enum NeedletStatus needlet_system_counts(const struct NeedletSystem *sys, size_t *out, size_t len);

// Number of analysis grid points; zero for a null handle.
//
// # Safety
// `sys` must be null or a live handle.
size_t needlet_system_analysis_points(const struct NeedletSystem *sys);

// Writes colatitude and longitude of each analysis grid point.
//
// # Safety
// `sys` must be a live handle; `theta` and `phi` must each hold `len` elements.
enum NeedletStatus needlet_system_analysis_grid(const struct NeedletSystem *sys,
                                                double *theta,
                                                double *phi,
                                                size_t len);

// Needlet coefficients of samples given on the analysis grid.
//
// # Safety
// `sys` must be a live handle, `samples` must hold `len` values and `out`
// must be writable.
enum NeedletStatus needlet_analyze(const struct NeedletSystem *sys,
                                   const double *samples,
                                   size_t len,
                                   struct NeedletPyramid **out);

// Evaluates the function of `pyr` at `len` points given by colatitude and
// longitude in radians.
//
// # Safety
// Handles must be live; `theta`, `phi` and `out` must each hold `len` elements.
enum NeedletStatus needlet_synthesize(const struct NeedletSystem *sys,
                                      const struct NeedletPyramid *pyr,
                                      const double *theta,
                                      const double *phi,
                                      size_t len,
                                      double *out);

// Builds a pyramid from concatenated level data. `counts[j]` is the length
// of level `j` and `data` holds the sum of all counts.
//
// # Safety
// `counts` must hold `levels` elements, `data` the sum of them, and `out`
// must be writable.
enum NeedletStatus needlet_pyramid_new(double bandwidth,
                                       const size_t *counts,
                                       size_t levels,
                                       const double *data,
                                       size_t data_len,
                                       struct NeedletPyramid **out);

// Releases a pyramid. Null is ignored.
//
// # Safety
// `pyr` must be null or a handle not yet freed.
void needlet_pyramid_free(struct NeedletPyramid *pyr);

// Number of levels; zero for a null handle.
//
// # Safety
// `pyr` must be null or a live handle.
size_t needlet_pyramid_levels(const struct NeedletPyramid *pyr);

// Length of level `j`, or zero when `j` is out of range.
//
// # Safety
// `pyr` must be null or a live handle.
size_t needlet_pyramid_level_len(const struct NeedletPyramid *pyr, size_t j);

// Copies level `j` into `out[0..len]`; `len` must equal the level length.
//
// # Safety
// `pyr` must be a live handle and `out` must hold `len` elements.
enum NeedletStatus needlet_pyramid_level(const struct NeedletPyramid *pyr,
                                         size_t j,
                                         double *out,
                                         size_t len);

// Block-thresholds `noisy` at sample size `n`. `kappa` may be `INFINITY`.
// On success `*out` holds the estimate and, when `kept_blocks` is not
// null, it receives the number of kept blocks.
//
// # Safety
// Handles must be live; `out` must be writable; `kept_blocks` may be null.
enum NeedletStatus needlet_denoise(const struct NeedletSystem *sys,
                                   const struct NeedletPyramid *noisy,
                                   double n,
                                   double kappa,
                                   double eta,
                                   uint32_t p_stat,
                                   struct NeedletPyramid **out,
                                   size_t *kept_blocks);

// Theoretical rate exponent α for smoothness `r`, integrability `pi` and
// loss exponent `p` (`INFINITY` for the sup norm).
//
// # Safety
// `out` must be writable.
enum NeedletStatus needlet_rate(double r, double pi, double p, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEEDLET_H */
