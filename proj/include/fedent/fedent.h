/* fedent: entropy-driven adaptive federated-learning simulation laboratory.
 *
 * C interface to the shared library. Every entry point returns a
 * fedent_status; on failure fedent_last_error() carries a human-readable
 * message for the calling thread. Handles are opaque and single-threaded:
 * share one fedent_experiment across threads only with external locking.
 */
#ifndef FEDENT_FEDENT_H
#define FEDENT_FEDENT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FEDENT_API __declspec(dllexport)
#else
#define FEDENT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedent_status {
    FEDENT_OK = 0,
    /* Configuration, usage, or file problems. CLI exit code 1. */
    FEDENT_ERR_CONFIG = 1,
    /* Numeric non-convergence; outputs are still written. CLI exit code 2. */
    FEDENT_ERR_NOT_CONVERGED = 2,
    FEDENT_ERR_INTERNAL = 3,
} fedent_status;

/* A loaded experiment: parsed configuration plus materialized datasets. */
typedef struct fedent_experiment fedent_experiment;

FEDENT_API const char* fedent_version(void);

/* Message describing the most recent failure on this thread. */
FEDENT_API const char* fedent_last_error(void);

FEDENT_API fedent_status fedent_experiment_open(const char* config_path, fedent_experiment** out);
FEDENT_API void fedent_experiment_close(fedent_experiment* experiment);

/* Replace the config's seed list with a single seed. */
FEDENT_API fedent_status fedent_experiment_override_seed(fedent_experiment* experiment, uint64_t seed);
FEDENT_API fedent_status fedent_experiment_override_output_dir(fedent_experiment* experiment, const char* dir);

/* Number of (algorithm, seed) runs the config describes. */
FEDENT_API size_t fedent_experiment_run_count(const fedent_experiment* experiment);
FEDENT_API size_t fedent_experiment_seed_count(const fedent_experiment* experiment);

typedef struct fedent_trajectory_info {
    uint64_t seed;
    int32_t outer_iterations;
    int32_t converged;
    double gap_phi1;
    double gap_phi2;
    char path[512];
} fedent_trajectory_info;

/* Computes and writes the mean-field trajectory file for every seed. Fills up
 * to `capacity` info records and stores the total in *count (both optional).
 * Returns FEDENT_ERR_NOT_CONVERGED when any fixed point missed its thresholds;
 * the trajectory files are written either way. */
FEDENT_API fedent_status fedent_precompute(fedent_experiment* experiment, fedent_trajectory_info* infos,
                                size_t capacity, size_t* count);

typedef struct fedent_run_info {
    char algorithm[16];
    uint64_t seed;
    double final_accuracy;
    double final_train_loss;
    int32_t eta_bound_violations;
    char metrics_path[512];
} fedent_run_info;

/* Runs the full algorithm x seed grid, writing one metrics CSV per run plus
 * summary.json in the output directory. */
FEDENT_API fedent_status fedent_run(fedent_experiment* experiment, fedent_run_info* infos, size_t capacity,
                         size_t* count);

/* Writes the per-client label histogram CSV; stores its path. */
FEDENT_API fedent_status fedent_inspect_partition(fedent_experiment* experiment, char* csv_path, size_t capacity);

typedef struct fedent_bounds_report {
    double d_hat; /* empirical gradient-norm bound */
    double l_hat; /* empirical Lipschitz constant of the gradient */
    int32_t trials;
} fedent_bounds_report;

FEDENT_API fedent_status fedent_estimate_bounds(fedent_experiment* experiment, fedent_bounds_report* report);

#ifdef __cplusplus
}
#endif

#endif /* FEDENT_FEDENT_H */
