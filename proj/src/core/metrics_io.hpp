#pragma once

#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/engine.hpp"

namespace fedent {

// One (algorithm, seed) leg of an experiment run.
struct RunResult {
    Algorithm algorithm = Algorithm::fedavg;
    std::uint64_t seed = 0;
    RunHistory history;
    std::string metrics_path;
};

// Frozen column set; external plotting depends on the exact header:
// round,algorithm,seed,train_loss,test_accuracy,mean_eta,entropy,max_drift,
// drift_bound,eta_bound_violations
void write_metrics_csv(const std::string& path, Algorithm algorithm, std::uint64_t seed,
                       const RunHistory& history);

// Per-client label histogram CSV: client_id,class,count.
void write_partition_csv(const std::string& path, const LabeledDataset& dataset,
                         const std::vector<ClientPartition>& parts);

void write_summary_json(const std::string& path, const std::vector<RunResult>& results,
                        double runtime_seconds);

// Shortest-exact decimal for a double ("%.17g"); stable across runs for
// identical bit patterns.
std::string format_double(double value);

void ensure_parent_dir(const std::string& path);

}  // namespace fedent
