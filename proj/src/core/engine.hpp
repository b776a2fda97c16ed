#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/analysis.hpp"
#include "core/data.hpp"
#include "core/meanfield.hpp"
#include "core/models.hpp"
#include "core/numerics.hpp"

namespace fedent {

enum class Algorithm { fedent, fedavg, fedadam, fedprox, feddyn, fedcos, fednorm };

const char* algorithm_name(Algorithm algo);
Algorithm algorithm_from_name(const std::string& name);
bool algorithm_needs_trajectory(Algorithm algo);

struct AlgoParams {
    double mu = 0.01;        // fedprox proximal weight
    double alpha = 0.001;    // feddyn regularizer weight
    double beta1 = 0.9;      // fedadam first moment
    double beta2 = 0.99;     // fedadam second moment
    double tau = 1e-3;       // fedadam denominator offset
    double server_lr = 0.01; // fedadam server step size
};

struct TrainingConfig {
    Algorithm algorithm = Algorithm::fedavg;
    ModelSpec model;
    PartitionSpec partition;
    int rounds = 10;       // T
    int local_epochs = 1;  // E
    int batch_size = 32;
    double base_lr = 0.01;  // static rate for baselines, eta_i(-1) seed for fedent/fednorm
    double beta = 0.99;
    double gamma = 0.99;
    double sample_fraction = 1.0;
    std::uint64_t seed = 1;
    AlgoParams algo_params;
    RateSolveConfig rate_solve;  // inner solver settings (beta is taken from `beta`)
    double fp_eps1 = 1e-3;
    double fp_eps2 = 1e-3;
    int fp_max_outer = 200;
    int bound_probe_trials = 16;
    double bound_probe_radius = 0.1;
};

void validate_training_config(const TrainingConfig& config, std::size_t dataset_size);

// One client's training-time state. feddyn_h stays empty until the feddyn
// path first touches the client.
struct ClientRunState {
    int client_id = 0;
    ClientPartition partition;
    Batch data;  // gathered in ascending dataset-index order
    ParamVector local_params;
    std::vector<double> eta_history;  // one entry per round participated
    ParamVector feddyn_h;
};

struct ServerState {
    ParamVector global_params;
    ParamVector adam_m;  // fedadam only
    ParamVector adam_v;  // fedadam only, entries >= 0
    int round = 0;
};

struct RoundRecord {
    int round = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double mean_eta = 0.0;
    double entropy = 0.0;
    double max_drift = 0.0;
    double drift_bound = 0.0;
    int eta_bound_violations = 0;
    double round_gap = 0.0;
    double round_gap_bound = 0.0;
    std::int64_t wallclock_ms = 0;
};

struct RunHistory {
    std::vector<RoundRecord> rounds;
    double final_accuracy = 0.0;
    double final_train_loss = 0.0;
    int total_eta_violations = 0;
    double d_hat = 0.0;  // fedent runs: empirical gradient bound over the visited trajectory
    double l_hat = 0.0;  // fedent runs: empirical Lipschitz constant
    ParamVector final_params;
};

// sum_i theta_i * w_i. theta must sum to 1 within 1e-9 (renormalize first
// when aggregating a sampled subset).
ParamVector aggregate(const std::vector<ParamVector>& locals, const std::vector<double>& theta);

// E epochs of mini-batch SGD from global_w at rate eta. fedprox adds
// mu * (w - global_w) to each batch gradient; feddyn adds -h_i + alpha *
// (w - global_w) and then updates h_i <- h_i - alpha * (w_final - global_w).
// The remaining algorithms run plain SGD locally.
ParamVector local_update(Algorithm algo, const ModelSpec& model, ClientRunState& client,
                         const ParamVector& global_w, double eta, int epochs, int batch_size,
                         RngStream rng, const AlgoParams& params);

// fedadam applies the server-side adaptive step on the pseudo-gradient
// aggregated - global; everything else adopts the aggregate directly.
void server_update(Algorithm algo, ServerState& server, const ParamVector& aggregated,
                   const AlgoParams& params);

// Cosine-similarity reweighting: per-client cos(w_i, global) floored at 0,
// multiplied by the data weights and renormalized; all-zero similarity falls
// back to the data weights unchanged.
std::vector<double> fedcos_weights(const std::vector<ParamVector>& locals, const ParamVector& global_w,
                                   const std::vector<double>& theta);

// One-step minimizer of the Euclidean-penalty objective:
// eta = max{0, beta * (phi1(t) - phi1(t+1))^T grad / ((1 - beta) + beta * |grad|^2)},
// clamped to [0, 1].
double fednorm_rate(double theta_i, const ParamVector& grad, const ParamVector& phi1_t,
                    const ParamVector& phi1_next, double beta);

struct EvalResult {
    double accuracy = 0.0;
    double loss = 0.0;
};

// Accuracy (argmax with lowest-index tie break) and mean cross-entropy.
EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const Batch& test);

// Builds the per-client fixed batches and runs the estimator fixed point over
// the full client set of the config's partition.
MeanFieldTrajectory precompute_trajectory(const TrainingConfig& config, const LabeledDataset& train);

// T federated rounds: sample clients without replacement, compute per-client
// rates (fedent/fednorm solve against the trajectory and blend with the decay
// rule; baselines use base_lr), run local updates, aggregate with the sampled
// weights renormalized, apply the server update, and evaluate. For fedent the
// rate-bound and drift diagnostics are filled after the run from bounds
// estimated on the visited trajectory.
//
// Local updates of distinct clients are independent (each owns its stream);
// this implementation runs them sequentially so results stay bit-reproducible
// regardless of the host's scheduler.
RunHistory run_experiment(const TrainingConfig& config, const LabeledDataset& train,
                          const LabeledDataset& test, const MeanFieldTrajectory* trajectory);

}  // namespace fedent
