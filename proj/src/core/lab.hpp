#pragma once

#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/metrics_io.hpp"

namespace fedent {

struct TrajectoryInfo {
    std::uint64_t seed = 0;
    std::string path;
    int outer_iterations = 0;
    bool converged = false;
    double gap_phi1 = 0.0;
    double gap_phi2 = 0.0;
};

struct RunInfo {
    Algorithm algorithm = Algorithm::fedavg;
    std::uint64_t seed = 0;
    double final_accuracy = 0.0;
    double final_train_loss = 0.0;
    int eta_bound_violations = 0;
    std::string metrics_path;
};

// One loaded experiment: parsed config plus materialized datasets. Drives the
// four operations the CLI exposes.
class Lab {
public:
    explicit Lab(const std::string& config_path);

    void override_seed(std::uint64_t seed);
    void override_output_dir(const std::string& dir);

    const ExperimentConfig& config() const { return config_; }
    std::size_t run_count() const { return config_.algorithms.size() * config_.seeds.size(); }

    // Computes and writes one trajectory per seed. Non-convergence is not an
    // exception: the file is still written and the info carries the flag.
    std::vector<TrajectoryInfo> precompute();

    // Runs the full algorithm x seed grid, writing one metrics CSV per run
    // and a combined summary.json.
    std::vector<RunInfo> run();

    // Writes the per-client label histogram CSV; returns its path.
    std::string inspect_partition();

    SmoothnessEstimate estimate_bounds();

private:
    TrainingConfig training_config(Algorithm algorithm, std::uint64_t seed) const;
    std::string metrics_path(Algorithm algorithm, std::uint64_t seed) const;

    ExperimentConfig config_;
    LabeledDataset train_;
    LabeledDataset test_;
};

}  // namespace fedent
