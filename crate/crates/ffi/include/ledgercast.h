#ifndef LEDGERCAST_H
#define LEDGERCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes; the numeric values of the library error classes match the
 CLI exit codes.
 */
typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_IO = 1,
  LC_STATUS_VALIDATION = 2,
  LC_STATUS_DATA = 3,
  LC_STATUS_NUMERICAL = 4,
  LC_STATUS_NULL_POINTER = 5,
  LC_STATUS_PANIC = 6,
} LcStatus;

/*
 Opaque dataset handle.
 */
typedef struct LcDataset LcDataset;

/*
 Opaque H1/H2 comparison report handle.
 */
typedef struct LcReport LcReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next library call on this thread.
 */
const char *lc_last_error_message(void);

/*
 Library version as a static string.
 */
const char *lc_version(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void lc_string_free(char *s);

/*
 Generates a synthetic dataset. `synth_toml` may be null for the pinned
 default configuration; `seed` always overrides the configured seed.

 # Safety
 `synth_toml` is null or a nul-terminated string; `out` is writable.
 */
enum LcStatus lc_dataset_generate(const char *synth_toml, uint64_t seed, struct LcDataset **out);

/*
 Loads `invoices.csv` and an optional `support.csv` (null to skip).
 `config_toml` may be null; it supplies the fiscal calendar.

 # Safety
 String arguments are null or nul-terminated; `out` is writable.
 */
enum LcStatus lc_dataset_load(const char *invoices_path,
                              const char *support_path,
                              const char *config_toml,
                              struct LcDataset **out);

/*
 Writes `invoices.csv` and `support.csv` into `directory`.

 # Safety
 `dataset` is a live handle; `directory` is nul-terminated.
 */
enum LcStatus lc_dataset_export(const struct LcDataset *dataset,
                                const char *directory,
                                const char *config_toml);

/*
 Number of invoices in the dataset.

 # Safety
 `dataset` is a live handle; `out` is writable.
 */
enum LcStatus lc_dataset_invoice_count(const struct LcDataset *dataset, size_t *out);

/*
 Frees a dataset handle. Null is ignored.

 # Safety
 `dataset` comes from this library and is not used afterwards.
 */
void lc_dataset_free(struct LcDataset *dataset);

/*
 Forecast from the last observed week as a JSON run report; with
 `evaluate` nonzero the rolling evaluation is included.

 # Safety
 `dataset` is a live handle; `config_toml` is null or nul-terminated;
 `out_json` is writable.
 */
enum LcStatus lc_forecast_json(const struct LcDataset *dataset,
                               const char *config_toml,
                               int32_t evaluate,
                               char **out_json);

/*
 Runs H1 and H2 on identical folds.

 # Safety
 `dataset` is a live handle; `config_toml` is null or nul-terminated;
 `out` is writable.
 */
enum LcStatus lc_compare(const struct LcDataset *dataset,
                         const char *config_toml,
                         struct LcReport **out);

/*
 Accuracy uplift of H2 over H1, in percent.

 # Safety
 `report` is a live handle; `out` is writable.
 */
enum LcStatus lc_report_uplift(const struct LcReport *report, double *out);

/*
 Final score of H1 (`variant` 1) or H2 (`variant` 2).

 # Safety
 `report` is a live handle; `out` is writable.
 */
enum LcStatus lc_report_final_score(const struct LcReport *report, int32_t variant, double *out);

/*
 The full comparison report as JSON.

 # Safety
 `report` is a live handle; `out_json` is writable.
 */
enum LcStatus lc_report_json(const struct LcReport *report, char **out_json);

/*
 Frees a report handle. Null is ignored.

 # Safety
 `report` comes from this library and is not used afterwards.
 */
void lc_report_free(struct LcReport *report);

/*
 Mean absolute percentage error over `n` aligned values.

 # Safety
 `actual` and `predicted` point to `n` readable doubles; `out` is writable.
 */
enum LcStatus lc_mape(const double *actual, const double *predicted, size_t n, double *out);

/*
 Variance-weighted score of `n` fold MAPEs with normalized weights.

 # Safety
 `mapes` and `weights` point to `n` readable doubles; `out` is writable.
 */
enum LcStatus lc_variance_weighted_score(const double *mapes,
                                         const double *weights,
                                         size_t n,
                                         double alpha,
                                         double *out);

/*
 Custom loss `α·Ē_w + (1 − α)·σ_w` over `n` fold errors.

 # Safety
 `errors` and `weights` point to `n` readable doubles; `out` is writable.
 */
enum LcStatus lc_custom_loss(const double *errors,
                             const double *weights,
                             size_t n,
                             double alpha,
                             double *out);

/*
 `(baseline − proposed) / baseline · 100`.

 # Safety
 `out` is writable.
 */
enum LcStatus lc_accuracy_uplift(double error_baseline, double error_proposed, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEDGERCAST_H */
