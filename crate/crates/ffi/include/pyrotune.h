#ifndef PYROTUNE_H
#define PYROTUNE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_ARGUMENT = 1,
  /*
   Bad input: dimensions, validation, parse errors.
   */
  PT_STATUS_INVALID_ARGUMENT = 2,
  /*
   Singular matrices, missing responses and similar numerical failures.
   */
  PT_STATUS_NUMERICAL = 3,
  PT_STATUS_PANIC = 4,
} PtStatus;

typedef enum PtPairingMethod {
  PT_PAIRING_METHOD_SEQUENTIAL = 0,
  PT_PAIRING_METHOD_ASSIGNMENT = 1,
} PtPairingMethod;

typedef struct PtPlant PtPlant;

typedef struct PtTrace PtTrace;

typedef struct PtTransferFunction PtTransferFunction;

/*
 Fitted second-order model with delay.
 */
typedef struct PtFit {
  double k0;
  double tau1;
  double tau2;
  double tau_z;
  double delay;
  double residual_norm;
  bool converged;
  uint32_t iterations;
} PtFit;

typedef struct PtPiTuning {
  double kp;
  double ki;
  double tau_c;
  double k;
  double tau1;
  /*
   Effective delay after reduction.
   */
  double delay;
} PtPiTuning;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer is
 valid until the next call into the library on this thread.
 */
const char *pt_last_error(void);

/*
 Library version as a static string.
 */
const char *pt_version(void);

/*
 Creates `k0 prod(tz s + 1) / prod(tp s + 1) e^(-delay s)`.

 # Safety
 `zeros` and `poles` point to `n_zeros` and `n_poles` values (may be null
 when the count is zero); `out` is writable.
 */
enum PtStatus pt_tf_new(double k0,
                        const double *zeros,
                        uintptr_t n_zeros,
                        const double *poles,
                        uintptr_t n_poles,
                        double delay,
                        struct PtTransferFunction **out);

/*
 # Safety
 `tf` must come from this library and not be used afterwards.
 */
void pt_tf_free(struct PtTransferFunction *tf);

/*
 Unit step response at `n` times from the closed form.

 # Safety
 `t` and `out` point to `n` values.
 */
enum PtStatus pt_tf_step(const struct PtTransferFunction *tf,
                         const double *t,
                         uintptr_t n,
                         double *out);

/*
 Unit step response by fixed-step integration with step `dt`.

 # Safety
 `t` and `out` point to `n` values; `t` increases.
 */
enum PtStatus pt_tf_step_numeric(const struct PtTransferFunction *tf,
                                 const double *t,
                                 uintptr_t n,
                                 double dt,
                                 double *out);

/*
 `G(i omega)`, delay included.

 # Safety
 `re` and `im` are writable.
 */
enum PtStatus pt_tf_frequency_response(const struct PtTransferFunction *tf,
                                       double omega,
                                       double *re,
                                       double *im);

/*
 Fits the second-order model with delay to normalized step data.

 # Safety
 `t` and `s` point to `n` values; `out` is writable.
 */
enum PtStatus pt_fit_sopdt(const double *t, const double *s, uintptr_t n, struct PtFit *out);

/*
 SIMC PI tuning; a NaN `tau_c` selects the effective delay.

 # Safety
 `out` is writable.
 */
enum PtStatus pt_tune_pi(const struct PtTransferFunction *tf, double tau_c, struct PtPiTuning *out);

/*
 Relative gain array of an `n` by `n` matrix.

 # Safety
 `g_re`, `lambda_re` and `lambda_im` point to `n * n` values; `g_im` is
 null or points to `n * n` values.
 */
enum PtStatus pt_rga(const double *g_re,
                     const double *g_im,
                     uintptr_t n,
                     double *lambda_re,
                     double *lambda_im);

/*
 Pairs the rows (CVs) of a gain matrix with its columns (MVs) by relative
 interaction; `mv_of_cv[i]` receives the column paired with row `i`.

 # Safety
 `g_re` points to `n * n` values, `g_im` is null or points to `n * n`
 values, `mv_of_cv` points to `n` values.
 */
enum PtStatus pt_pair(const double *g_re,
                      const double *g_im,
                      uintptr_t n,
                      enum PtPairingMethod method,
                      uintptr_t *mv_of_cv);

/*
 Reduces DAE Jacobians (JSON text, as read by the `linearize` command) to
 a state-space model. `*out` receives JSON text to be released with
 [`pt_string_free`].

 # Safety
 `jacobians_json` is a nul-terminated string; `out` is writable.
 */
enum PtStatus pt_reduce_dae_json(const char *jacobians_json, char **out);

/*
 # Safety
 `s` must be a string returned by this library and not used afterwards.
 */
void pt_string_free(char *s);

/*
 Parses a plant file (JSON text).

 # Safety
 `json` is a nul-terminated string; `out` is writable.
 */
enum PtStatus pt_plant_from_json(const char *json, struct PtPlant **out);

/*
 # Safety
 `plant` must come from this library and not be used afterwards.
 */
void pt_plant_free(struct PtPlant *plant);

/*
 Closed-loop simulation with a loop configuration given as JSON text.

 # Safety
 `loops_json` is a nul-terminated string; `out` is writable.
 */
enum PtStatus pt_simulate(const struct PtPlant *plant,
                          const char *loops_json,
                          struct PtTrace **out);

/*
 Number of samples in a trace.

 # Safety
 `trace` comes from [`pt_simulate`].
 */
uintptr_t pt_trace_len(const struct PtTrace *trace);

/*
 Number of data channels in a trace.

 # Safety
 `trace` comes from [`pt_simulate`].
 */
uintptr_t pt_trace_channels(const struct PtTrace *trace);

/*
 Sample times, owned by the trace.

 # Safety
 `trace` comes from [`pt_simulate`].
 */
const double *pt_trace_time(const struct PtTrace *trace);

/*
 Name of channel `index`, owned by the trace; null when out of range.

 # Safety
 `trace` comes from [`pt_simulate`].
 */
const char *pt_trace_channel_name(const struct PtTrace *trace, uintptr_t index);

/*
 Values of channel `index`, owned by the trace; null when out of range.

 # Safety
 `trace` comes from [`pt_simulate`].
 */
const double *pt_trace_channel(const struct PtTrace *trace, uintptr_t index);

/*
 # Safety
 `trace` must come from this library and not be used afterwards.
 */
void pt_trace_free(struct PtTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PYROTUNE_H */
