#ifndef COOPEIG_H
#define COOPEIG_H

/* C interface to the coopeig shared library.
 *
 * All entry points return a coopeig_status; COOPEIG_OK means success.
 * Strings returned through char** out-parameters are heap-allocated and
 * must be released with coopeig_string_free. coopeig_last_error() returns
 * a thread-local message describing the most recent failure.
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum coopeig_status {
  COOPEIG_OK = 0,
  COOPEIG_EVALIDATION = 2, /* bad config, bad input, model violation */
  COOPEIG_ENUMERIC = 3,    /* numerical failure (partial report possible) */
  COOPEIG_EINTERNAL = 4
} coopeig_status;

const char* coopeig_version(void);

/* Thread-local message for the last failing call in this thread. */
const char* coopeig_last_error(void);

void coopeig_string_free(char* s);

/* Runs a batch task from a JSON config. Writes report.json and CSV tables
 * into out_dir (NULL: the config's output.dir, or "." when absent). threads
 * <= 0 picks 1; seed >= 0 overrides the config seed. When report_json_out
 * is non-NULL it receives the report text (also on COOPEIG_ENUMERIC, where
 * a partial report is produced). */
coopeig_status coopeig_run_file(const char* config_path, const char* out_dir,
                                int threads, long long seed,
                                char** report_json_out);
coopeig_status coopeig_run_json(const char* config_json, const char* out_dir,
                                int threads, long long seed,
                                char** report_json_out);

/* Opaque handle for a parsed problem (the "problem" block of a config). */
typedef struct coopeig_problem coopeig_problem;

coopeig_problem* coopeig_problem_create(const char* problem_json);
void coopeig_problem_free(coopeig_problem* p);

/* Samples the coefficient oracles on a lattice with sample_density points
 * per axis; out_ok receives 1 when no violation was found. */
coopeig_status coopeig_problem_validate(coopeig_problem* p, int sample_density,
                                        int* out_ok);

coopeig_status coopeig_problem_irreducible(coopeig_problem* p, int sample_density,
                                           int* out_irreducible);

/* Principal Dirichlet eigenvalue on the ball of the given radius with grid
 * spacing h; bracket is a certified enclosure. */
coopeig_status coopeig_problem_dirichlet_eig(coopeig_problem* p, double radius,
                                             double h, double tol, double* out_lambda,
                                             double* out_lo, double* out_hi);

/* Nested-domain limit over the given radii. */
coopeig_status coopeig_problem_lambda_star(coopeig_problem* p, const double* radii,
                                           int n_radii, double h, double tol,
                                           double* out_lambda_star,
                                           double* out_uncertainty);

#ifdef __cplusplus
}
#endif

#endif /* COOPEIG_H */
