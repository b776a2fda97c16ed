#include "fedent/fedent.h"

#include <cstring>
#include <string>

#include "core/lab.hpp"

namespace {

thread_local std::string g_last_error;

struct ExperimentHandle {
    fedent::Lab lab;
};

fedent::Lab& lab_of(fedent_experiment* experiment) {
    return reinterpret_cast<ExperimentHandle*>(experiment)->lab;
}

fedent_status status_of(const fedent::Error& error) {
    switch (error.kind()) {
        case fedent::ErrorKind::not_converged:
            return FEDENT_ERR_NOT_CONVERGED;
        case fedent::ErrorKind::numeric:
            return FEDENT_ERR_INTERNAL;
        default:
            return FEDENT_ERR_CONFIG;
    }
}

void copy_string(const std::string& value, char* out, size_t capacity) {
    if (out == nullptr || capacity == 0) return;
    size_t n = value.size() < capacity - 1 ? value.size() : capacity - 1;
    std::memcpy(out, value.data(), n);
    out[n] = '\0';
}

template <typename Fn>
fedent_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const fedent::Error& e) {
        g_last_error = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return FEDENT_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return FEDENT_ERR_INTERNAL;
    }
}

}  // namespace

extern "C" {

const char* fedent_version(void) { return "0.1.0"; }

const char* fedent_last_error(void) { return g_last_error.c_str(); }

fedent_status fedent_experiment_open(const char* config_path, fedent_experiment** out) {
    if (config_path == nullptr || out == nullptr) {
        g_last_error = "fedent_experiment_open: null argument";
        return FEDENT_ERR_CONFIG;
    }
    *out = nullptr;
    return guarded([&] {
        auto* handle = new ExperimentHandle{fedent::Lab(config_path)};
        *out = reinterpret_cast<fedent_experiment*>(handle);
        return FEDENT_OK;
    });
}

void fedent_experiment_close(fedent_experiment* experiment) {
    delete reinterpret_cast<ExperimentHandle*>(experiment);
}

fedent_status fedent_experiment_override_seed(fedent_experiment* experiment, uint64_t seed) {
    if (experiment == nullptr) {
        g_last_error = "null experiment handle";
        return FEDENT_ERR_CONFIG;
    }
    return guarded([&] {
        lab_of(experiment).override_seed(seed);
        return FEDENT_OK;
    });
}

fedent_status fedent_experiment_override_output_dir(fedent_experiment* experiment, const char* dir) {
    if (experiment == nullptr || dir == nullptr) {
        g_last_error = "null argument";
        return FEDENT_ERR_CONFIG;
    }
    return guarded([&] {
        lab_of(experiment).override_output_dir(dir);
        return FEDENT_OK;
    });
}

size_t fedent_experiment_run_count(const fedent_experiment* experiment) {
    if (experiment == nullptr) return 0;
    return reinterpret_cast<const ExperimentHandle*>(experiment)->lab.run_count();
}

size_t fedent_experiment_seed_count(const fedent_experiment* experiment) {
    if (experiment == nullptr) return 0;
    return reinterpret_cast<const ExperimentHandle*>(experiment)->lab.config().seeds.size();
}

fedent_status fedent_precompute(fedent_experiment* experiment, fedent_trajectory_info* infos,
                                size_t capacity, size_t* count) {
    if (experiment == nullptr) {
        g_last_error = "null experiment handle";
        return FEDENT_ERR_CONFIG;
    }
    return guarded([&]() -> fedent_status {
        std::vector<fedent::TrajectoryInfo> results = lab_of(experiment).precompute();
        if (count != nullptr) *count = results.size();
        bool all_converged = true;
        for (size_t i = 0; i < results.size(); ++i) {
            all_converged = all_converged && results[i].converged;
            if (infos != nullptr && i < capacity) {
                fedent_trajectory_info& info = infos[i];
                info.seed = results[i].seed;
                info.outer_iterations = results[i].outer_iterations;
                info.converged = results[i].converged ? 1 : 0;
                info.gap_phi1 = results[i].gap_phi1;
                info.gap_phi2 = results[i].gap_phi2;
                copy_string(results[i].path, info.path, sizeof(info.path));
            }
        }
        if (!all_converged) {
            g_last_error = "fixed point did not reach its thresholds within max_outer iterations";
            return FEDENT_ERR_NOT_CONVERGED;
        }
        return FEDENT_OK;
    });
}

fedent_status fedent_run(fedent_experiment* experiment, fedent_run_info* infos, size_t capacity,
                         size_t* count) {
    if (experiment == nullptr) {
        g_last_error = "null experiment handle";
        return FEDENT_ERR_CONFIG;
    }
    return guarded([&]() -> fedent_status {
        std::vector<fedent::RunInfo> results = lab_of(experiment).run();
        if (count != nullptr) *count = results.size();
        for (size_t i = 0; i < results.size() && infos != nullptr && i < capacity; ++i) {
            fedent_run_info& info = infos[i];
            copy_string(fedent::algorithm_name(results[i].algorithm), info.algorithm,
                        sizeof(info.algorithm));
            info.seed = results[i].seed;
            info.final_accuracy = results[i].final_accuracy;
            info.final_train_loss = results[i].final_train_loss;
            info.eta_bound_violations = results[i].eta_bound_violations;
            copy_string(results[i].metrics_path, info.metrics_path, sizeof(info.metrics_path));
        }
        return FEDENT_OK;
    });
}

fedent_status fedent_inspect_partition(fedent_experiment* experiment, char* csv_path, size_t capacity) {
    if (experiment == nullptr) {
        g_last_error = "null experiment handle";
        return FEDENT_ERR_CONFIG;
    }
    return guarded([&] {
        std::string path = lab_of(experiment).inspect_partition();
        copy_string(path, csv_path, capacity);
        return FEDENT_OK;
    });
}

fedent_status fedent_estimate_bounds(fedent_experiment* experiment, fedent_bounds_report* report) {
    if (experiment == nullptr || report == nullptr) {
        g_last_error = "null argument";
        return FEDENT_ERR_CONFIG;
    }
    return guarded([&] {
        fedent::SmoothnessEstimate estimate = lab_of(experiment).estimate_bounds();
        report->d_hat = estimate.d_bound;
        report->l_hat = estimate.lipschitz;
        report->trials = estimate.trials;
        return FEDENT_OK;
    });
}

}  // extern "C"
