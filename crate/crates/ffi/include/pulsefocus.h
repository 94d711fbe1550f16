#ifndef PULSEFOCUS_H
#define PULSEFOCUS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Curves of a computed spectrum.
typedef enum PfSpectrumColumn {
  // Detuning from the pulse carrier, Hz.
  PF_SPECTRUM_COLUMN_FREQUENCY = 0,
  PF_SPECTRUM_COLUMN_P1 = 1,
  PF_SPECTRUM_COLUMN_P2 = 2,
  PF_SPECTRUM_COLUMN_Q = 3,
  PF_SPECTRUM_COLUMN_Q_STDERR = 4,
} PfSpectrumColumn;

// Result code of every call.
typedef enum PfStatus {
  PF_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or a value outside its domain.
  PF_STATUS_INVALID_ARGUMENT = 1,
  // Configuration rejected.
  PF_STATUS_CONFIG = 2,
  // Simulation or linear algebra failed.
  PF_STATUS_NUMERICAL = 3,
  // Fit finished without converging; outputs are still written.
  PF_STATUS_FIT_NOT_CONVERGED = 4,
  // Caller buffer shorter than the result.
  PF_STATUS_BUFFER_TOO_SMALL = 5,
  // Internal panic caught at the boundary.
  PF_STATUS_PANIC = 6,
} PfStatus;

// Opaque run configuration.
typedef struct PfConfig PfConfig;

// Opaque computed spectrum.
typedef struct PfSpectrum PfSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *pf_last_error(void);

// Library version as a static NUL-terminated string.
const char *pf_version(void);

// Parse a TOML run configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum PfStatus pf_config_from_toml(const char *toml, struct PfConfig **out);

// Built-in configuration by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum PfStatus pf_config_from_preset(const char *name, struct PfConfig **out);

// Override the ensemble: `sampling` 0 Monte-Carlo, 1 Gauss–Hermite,
// 2 uniform; `size` realizations, order or nodes.
//
// # Safety
// `config` must come from a `pf_config_*` constructor.
enum PfStatus pf_config_set_ensemble(struct PfConfig *config,
                                     int sampling,
                                     size_t size,
                                     uint64_t seed);

// Override the frequency grid: `points` samples over center ± half_span (MHz).
//
// # Safety
// `config` must come from a `pf_config_*` constructor.
enum PfStatus pf_config_set_frequencies(struct PfConfig *config,
                                        double center_mhz,
                                        double half_span_mhz,
                                        size_t points);

// Serialize to TOML. Release the string with [`pf_string_free`].
//
// # Safety
// `config` must come from a `pf_config_*` constructor and `out` be valid.
enum PfStatus pf_config_to_toml(const struct PfConfig *config, char **out);

// # Safety
// `s` must come from this library or be null.
void pf_string_free(char *s);

// # Safety
// `config` must come from a `pf_config_*` constructor or be null.
void pf_config_free(struct PfConfig *config);

// Compute the normalized ensemble spectrum of `config`.
//
// # Safety
// `config` must come from a `pf_config_*` constructor and `out` be valid.
enum PfStatus pf_spectrum_compute(const struct PfConfig *config, struct PfSpectrum **out);

// Number of frequencies, 0 for a null handle.
//
// # Safety
// `spectrum` must come from [`pf_spectrum_compute`] or be null.
size_t pf_spectrum_len(const struct PfSpectrum *spectrum);

// Copy one column (a [`PfSpectrumColumn`] value) into `buf` (capacity `len`).
//
// # Safety
// `spectrum` must come from [`pf_spectrum_compute`]; `buf` must hold `len`
// doubles.
enum PfStatus pf_spectrum_copy(const struct PfSpectrum *spectrum,
                               int column,
                               double *buf,
                               size_t len);

// # Safety
// `spectrum` must come from [`pf_spectrum_compute`] or be null.
void pf_spectrum_free(struct PfSpectrum *spectrum);

// Peak Rabi frequency (rad/s) giving a Gaussian pulse of `fwhm_ns`,
// truncated at ±3σ, the area `angle_pi`·π.
//
// # Safety
// `omega_out` must be a valid pointer.
enum PfStatus pf_calibrate_pulse(double fwhm_ns, double angle_pi, double *omega_out);

// Least-squares fit of a named model (`lorentzian_sum(n)`, `pseudo_voigt`,
// `gaussian`, `exponential`, `bi_exponential`) to `n` samples.
//
// `weights` and `init` may be null; a null `init` estimates the start from
// the data. Fitted parameters go to `params_out` (capacity `params_len`),
// their count to `n_params_out`. Returns `FitNotConverged` with the outputs
// filled when the optimizer stops early.
//
// # Safety
// `x`, `y` and a non-null `weights` must hold `n` doubles, a non-null
// `init` and `params_out` their stated lengths.
enum PfStatus pf_fit(const char *model,
                     const double *x,
                     const double *y,
                     const double *weights,
                     size_t n,
                     const double *init,
                     size_t init_len,
                     double *params_out,
                     size_t params_len,
                     size_t *n_params_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PULSEFOCUS_H */
