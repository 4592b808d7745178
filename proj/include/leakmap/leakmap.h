/* C interface to the leakmap library. Every function returns an lm_status; on failure the
 * message of the most recent error on the calling thread is available from lm_last_error(). */
#ifndef LEAKMAP_H
#define LEAKMAP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define LM_API __declspec(dllexport)
#else
#define LM_API __attribute__((visibility("default")))
#endif

typedef enum lm_status {
  LM_OK = 0,
  LM_INVALID_ARGUMENT,
  LM_POINT_ON_PARTITION_BOUNDARY,
  LM_INVALID_BETA,
  LM_NOT_MARKOV_ALIGNED,
  LM_DIMENSION_MISMATCH,
  LM_MASS_EXTINCT,
  LM_NO_CONVERGENCE,
  LM_ZERO_OPERATOR,
  LM_DEGENERATE_GAP,
  LM_REDUCIBLE,
  LM_PERIODIC,
  LM_TAIL_UNRESOLVED,
  LM_TRUNCATION_OVERFLOW,
  LM_COVERAGE_GAP,
  LM_CONFIG,
  LM_IO,
  LM_INTERNAL
} lm_status;

typedef struct lm_map lm_map;
typedef struct lm_hole lm_hole;
typedef struct lm_operator lm_operator;
typedef struct lm_spectrum lm_spectrum;
typedef struct lm_chain lm_chain;
typedef struct lm_tower lm_tower;

LM_API const char* lm_version(void);
LM_API const char* lm_status_name(lm_status status);
/* Empty string when the last call on this thread succeeded. */
LM_API const char* lm_last_error(void);

/* Maps */
LM_API lm_status lm_map_doubling(lm_map** out);
LM_API lm_status lm_map_full_linear(int branches, lm_map** out);
LM_API lm_status lm_map_quadratic(double a, lm_map** out);
/* Affine pieces: domains and images hold 2*count endpoints, decreasing[i] != 0 flips piece i.
 * expanding != 0 builds a piecewise-expanding map, otherwise a Markov one. */
LM_API lm_status lm_map_linear(const double* domains, const double* images, const int* decreasing, size_t count,
                               int expanding, lm_map** out);
LM_API lm_status lm_map_evaluate(const lm_map* map, double x, double* y);
LM_API void lm_map_free(lm_map* map);

/* Holes: 2*count endpoints; count may be 0. */
LM_API lm_status lm_hole_create(const double* intervals, size_t count, lm_hole** out);
LM_API lm_status lm_hole_measure(const lm_hole* hole, double* measure);
LM_API void lm_hole_free(lm_hole* hole);

/* Operators */
LM_API lm_status lm_operator_markov(const lm_map* map, const lm_hole* hole, size_t bins, lm_operator** out);
LM_API lm_status lm_operator_ulam(const lm_map* map, const lm_hole* hole, size_t bins, lm_operator** out);
LM_API lm_status lm_operator_read_dump(const char* path, lm_operator** out);
LM_API lm_status lm_operator_write_dump(const lm_operator* op, const char* path);
LM_API lm_status lm_operator_dim(const lm_operator* op, size_t* dim);
/* y = M x over the active bins; both arrays have length dim. */
LM_API lm_status lm_operator_apply(const lm_operator* op, const double* x, double* y, size_t dim);
LM_API void lm_operator_free(lm_operator* op);

/* Leading eigenpair and spectral gap */
LM_API lm_status lm_spectrum_compute(const lm_operator* op, double tol, size_t max_iter, lm_spectrum** out);
LM_API lm_status lm_spectrum_lambda(const lm_spectrum* spec, double* lambda);
LM_API lm_status lm_spectrum_sigma(const lm_spectrum* spec, double* sigma);
LM_API lm_status lm_spectrum_phi(const lm_spectrum* spec, double* phi, size_t dim);
LM_API void lm_spectrum_free(lm_spectrum* spec);

/* Survivor chain (exact Markov operators only) */
LM_API lm_status lm_chain_build(const lm_operator* op, const lm_map* map, lm_chain** out);
LM_API lm_status lm_chain_size(const lm_chain* chain, size_t* size);
LM_API lm_status lm_chain_stationary(const lm_chain* chain, double* p, size_t size);
LM_API lm_status lm_chain_pressure(const lm_chain* chain, const lm_spectrum* spec, double* entropy,
                                   double* lyapunov, double* residual);
LM_API void lm_chain_free(lm_chain* chain);

/* First-return tower over grid bins of an exact operator; beta <= 0 selects the default. */
LM_API lm_status lm_tower_build(const lm_map* map, const lm_operator* op, const size_t* base_bins, size_t count,
                                size_t depth_cap, double beta, lm_tower** out);
LM_API lm_status lm_tower_q(const lm_tower* tower, double* q);
LM_API lm_status lm_tower_h1(const lm_tower* tower, int* pass, double* lhs, double* rhs);
LM_API lm_status lm_tower_lambda(const lm_tower* tower, double tol, double* lambda);
/* Reachability up to `horizon`; onset is 0 when the base is not covered at the horizon. */
LM_API lm_status lm_tower_mixing(const lm_tower* tower, size_t horizon, size_t* onset, int* mixing);
LM_API void lm_tower_free(lm_tower* tower);

/* Runs a CLI command. out_dir may be NULL; the seed applies when has_seed != 0.
 * exit_code receives 0 on success, 1 config, 2 numeric, 3 structural; lm_last_error() then holds the
 * command's message. */
LM_API lm_status lm_run_command(const char* command, const char* config_path, const char* out_dir, uint64_t seed,
                                int has_seed, int dump_matrix, int* exit_code);

#ifdef __cplusplus
}
#endif

#endif
