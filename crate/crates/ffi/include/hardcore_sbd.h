#ifndef HARDCORE_SBD_H
#define HARDCORE_SBD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API function.
 */
typedef enum HsbdStatus {
  HsbdStatus_Ok = 0,
  HsbdStatus_NullPointer = 1,
  HsbdStatus_InvalidArgument = 2,
  HsbdStatus_ContractViolation = 3,
  HsbdStatus_InsufficientData = 4,
  HsbdStatus_IoError = 5,
  HsbdStatus_Panic = 6,
} HsbdStatus;

/**
 * Opaque point configuration handle.
 */
typedef struct HsbdConfiguration HsbdConfiguration;

/**
 * Model parameters. `boundary_torus` nonzero selects periodic boundaries.
 */
typedef struct HsbdParams {
  uint32_t d;
  double side;
  double rho;
  double lambda;
  uint64_t seed;
  double slab_len;
  uint8_t boundary_torus;
} HsbdParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next API call on the same thread.
 */
const char *hsbd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hsbd_version(void);

/**
 * Create a configuration. `init_kind`: 0 empty, 1 Matern I, 2 Matern II,
 * 3 saturated RSA; `lambda_prop` is the proposal intensity for kinds 1-3.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum HsbdStatus hsbd_config_new(const struct HsbdParams *params,
                                uint32_t init_kind,
                                double lambda_prop,
                                struct HsbdConfiguration **out);

/**
 * Release a configuration handle. Null is a no-op.
 *
 * # Safety
 * `config` must be a pointer from this library, freed at most once.
 */
void hsbd_config_free(struct HsbdConfiguration *config);

/**
 * Number of live points, or -1 if the handle is null.
 *
 * # Safety
 * `config` must be a valid handle or null.
 */
int64_t hsbd_config_len(const struct HsbdConfiguration *config);

/**
 * Fetch point `index` (iteration order is stable): coordinates into
 * `x_out[3]` (unused axes zero) and the birth time into `birth_out`.
 *
 * # Safety
 * `config` must be a valid handle; `x_out` must have room for 3 doubles.
 */
enum HsbdStatus hsbd_config_point(const struct HsbdConfiguration *config,
                                  uintptr_t index,
                                  double *x_out,
                                  double *birth_out);

/**
 * Advance the configuration through the dynamics over [t0, t1).
 *
 * # Safety
 * `params` and `config` must be valid pointers.
 */
enum HsbdStatus hsbd_simulate(const struct HsbdParams *params,
                              struct HsbdConfiguration *config,
                              double t0,
                              double t1);

/**
 * Draw a coupling-from-the-past sample. On Ok, `out_config` owns the time-0
 * configuration; `out_coalesced` is 0 when the budget was exhausted, in
 * which case the sample is only a long-run approximation and
 * `out_coincidence` is infinity.
 *
 * # Safety
 * All pointers must be valid.
 */
enum HsbdStatus hsbd_cftp_sample(const struct HsbdParams *params,
                                 double t_init,
                                 double t_max,
                                 struct HsbdConfiguration **out_config,
                                 double *out_horizon,
                                 uint8_t *out_coalesced,
                                 double *out_coincidence);

/**
 * Evaluate the decay condition; writes the expression value and whether it
 * is negative (condition satisfied).
 *
 * # Safety
 * Output pointers must be valid.
 */
enum HsbdStatus hsbd_theorem_condition(double rho,
                                       uint32_t d,
                                       double lambda,
                                       double *out_value,
                                       uint8_t *out_satisfied);

/**
 * Fraction of the window covered by radius-1/2 balls around the points.
 *
 * # Safety
 * `config` and `out` must be valid pointers.
 */
enum HsbdStatus hsbd_packing_fraction(const struct HsbdConfiguration *config, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARDCORE_SBD_H */
