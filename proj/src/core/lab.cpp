#include "core/lab.hpp"

#include <chrono>

namespace fedent {

Lab::Lab(const std::string& config_path) : config_(parse_experiment_file(config_path)) {
    load_datasets(config_, train_, test_);
    validate_training_config(training_config(config_.algorithms.front(), config_.seeds.front()),
                             train_.size());
}

void Lab::override_seed(std::uint64_t seed) {
    config_.seeds.assign(1, seed);
    config_.base.seed = seed;
}

void Lab::override_output_dir(const std::string& dir) {
    std::string old_default = config_.paths.output_dir + "/trajectory.mft";
    if (config_.paths.trajectory_path == old_default) {
        config_.paths.trajectory_path = dir + "/trajectory.mft";
    }
    config_.paths.output_dir = dir;
}

TrainingConfig Lab::training_config(Algorithm algorithm, std::uint64_t seed) const {
    TrainingConfig config = config_.base;
    config.algorithm = algorithm;
    config.seed = seed;
    return config;
}

std::string Lab::metrics_path(Algorithm algorithm, std::uint64_t seed) const {
    if (run_count() == 1) {
        return config_.paths.output_dir + "/metrics.csv";
    }
    return config_.paths.output_dir + "/metrics_" + algorithm_name(algorithm) + "_seed" +
           std::to_string(seed) + ".csv";
}

std::vector<TrajectoryInfo> Lab::precompute() {
    bool any = false;
    for (Algorithm algo : config_.algorithms) any = any || algorithm_needs_trajectory(algo);
    if (!any) {
        fail(ErrorKind::config, "precompute applies only to configs that run fedent or fednorm");
    }
    std::vector<TrajectoryInfo> infos;
    for (std::uint64_t seed : config_.seeds) {
        TrainingConfig config = training_config(config_.algorithms.front(), seed);
        MeanFieldTrajectory trajectory = precompute_trajectory(config, train_);
        TrajectoryInfo info;
        info.seed = seed;
        info.path = config_.trajectory_path_for_seed(seed);
        info.outer_iterations = trajectory.outer_iterations;
        info.converged = trajectory.converged;
        info.gap_phi1 = trajectory.final_gap1;
        info.gap_phi2 = trajectory.final_gap2;
        ensure_parent_dir(info.path);
        save_trajectory(trajectory, info.path);
        infos.push_back(info);
    }
    return infos;
}

std::vector<RunInfo> Lab::run() {
    auto started = std::chrono::steady_clock::now();
    std::vector<RunInfo> infos;
    std::vector<RunResult> results;
    for (std::uint64_t seed : config_.seeds) {
        MeanFieldTrajectory trajectory;
        bool have_trajectory = false;
        for (Algorithm algorithm : config_.algorithms) {
            TrainingConfig config = training_config(algorithm, seed);
            const MeanFieldTrajectory* traj_ptr = nullptr;
            if (algorithm_needs_trajectory(algorithm)) {
                if (!have_trajectory) {
                    trajectory = load_trajectory(config_.trajectory_path_for_seed(seed));
                    have_trajectory = true;
                }
                traj_ptr = &trajectory;
            }
            RunResult result;
            result.algorithm = algorithm;
            result.seed = seed;
            result.history = run_experiment(config, train_, test_, traj_ptr);
            result.metrics_path = metrics_path(algorithm, seed);
            write_metrics_csv(result.metrics_path, algorithm, seed, result.history);

            RunInfo info;
            info.algorithm = algorithm;
            info.seed = seed;
            info.final_accuracy = result.history.final_accuracy;
            info.final_train_loss = result.history.final_train_loss;
            info.eta_bound_violations = result.history.total_eta_violations;
            info.metrics_path = result.metrics_path;
            infos.push_back(info);
            result.history.final_params.clear();  // not needed for the summary
            results.push_back(std::move(result));
        }
    }
    double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_summary_json(config_.paths.output_dir + "/summary.json", results, runtime);
    return infos;
}

std::string Lab::inspect_partition() {
    std::vector<ClientPartition> parts = partition(train_, config_.base.partition);
    std::string path = config_.paths.output_dir + "/partition.csv";
    write_partition_csv(path, train_, parts);
    return path;
}

SmoothnessEstimate Lab::estimate_bounds() {
    RngStream init_rng(config_.base.seed, streams::id(streams::kInitParams, 0));
    ParamVector w0 = init_params(config_.base.model, init_rng);
    RngStream probe_rng(config_.base.seed, streams::id(streams::kBoundsProbe));
    return fedent::estimate_bounds(config_.base.model, train_.examples, {w0},
                                   config_.base.bound_probe_trials, config_.base.bound_probe_radius,
                                   probe_rng);
}

}  // namespace fedent
