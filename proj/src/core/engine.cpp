#include "core/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace fedent {

namespace {

// Sampled batch positions inside a client's local data, materialized in
// ascending order so summation order never depends on the draw order.
std::vector<std::uint32_t> draw_batch_positions(std::size_t data_size, int batch_size, RngStream& rng) {
    std::vector<std::uint32_t> order(data_size);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch_size), data_size);
    order.resize(take);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<int> sample_clients(int num_clients, int sample_count, RngStream& rng) {
    std::vector<int> order(static_cast<std::size_t>(num_clients));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    order.resize(static_cast<std::size_t>(sample_count));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

const char* algorithm_name(Algorithm algo) {
    switch (algo) {
        case Algorithm::fedent: return "fedent";
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::fedadam: return "fedadam";
        case Algorithm::fedprox: return "fedprox";
        case Algorithm::feddyn: return "feddyn";
        case Algorithm::fedcos: return "fedcos";
        case Algorithm::fednorm: return "fednorm";
    }
    return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
    for (Algorithm algo : {Algorithm::fedent, Algorithm::fedavg, Algorithm::fedadam, Algorithm::fedprox,
                           Algorithm::feddyn, Algorithm::fedcos, Algorithm::fednorm}) {
        if (name == algorithm_name(algo)) return algo;
    }
    fail(ErrorKind::config, "unknown algorithm '" + name + "'");
}

bool algorithm_needs_trajectory(Algorithm algo) {
    return algo == Algorithm::fedent || algo == Algorithm::fednorm;
}

void validate_training_config(const TrainingConfig& config, std::size_t dataset_size) {
    validate_model_spec(config.model);
    if (config.rounds < 1) fail(ErrorKind::config, "rounds must be >= 1");
    if (config.local_epochs < 1) fail(ErrorKind::config, "local_epochs must be >= 1");
    if (config.batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
    if (!(config.sample_fraction > 0.0 && config.sample_fraction <= 1.0)) {
        fail(ErrorKind::config, "sample_fraction must lie in (0, 1]");
    }
    if (config.sample_fraction * config.partition.num_clients < 1.0 - 1e-12) {
        fail(ErrorKind::config, "sample_fraction * num_clients must be at least 1");
    }
    if (!(config.beta > 0.0 && config.beta < 1.0)) fail(ErrorKind::config, "beta must lie in (0, 1)");
    if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) fail(ErrorKind::config, "gamma must lie in [0, 1]");
    if (!(config.base_lr >= 0.0)) fail(ErrorKind::config, "base_lr must be non-negative");
    if (dataset_size > 0 && static_cast<std::size_t>(config.partition.num_clients) > dataset_size) {
        fail(ErrorKind::config, "more clients than training examples");
    }
}

ParamVector aggregate(const std::vector<ParamVector>& locals, const std::vector<double>& theta) {
    if (locals.empty() || locals.size() != theta.size()) {
        fail(ErrorKind::invalid_argument, "aggregate: locals and weights must align and be nonempty");
    }
    double total = std::accumulate(theta.begin(), theta.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
        fail(ErrorKind::invalid_argument,
             "aggregate: weights sum to " + std::to_string(total) + ", expected 1");
    }
    ParamVector out(locals[0].size(), 0.0);
    for (std::size_t i = 0; i < locals.size(); ++i) {
        check_same_length(locals[0], locals[i], "aggregate");
        axpy_inplace(theta[i], locals[i], out);
    }
    return out;
}

ParamVector local_update(Algorithm algo, const ModelSpec& model, ClientRunState& client,
                         const ParamVector& global_w, double eta, int epochs, int batch_size,
                         RngStream rng, const AlgoParams& params) {
    if (eta < 0.0) fail(ErrorKind::invalid_argument, "local_update: eta must be non-negative");
    if (eta == 0.0) return global_w;

    if (algo == Algorithm::feddyn && client.feddyn_h.size() != global_w.size()) {
        client.feddyn_h.assign(global_w.size(), 0.0);
    }

    ParamVector w = global_w;
    ParamVector grad;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::uint32_t> order(client.data.size());
        std::iota(order.begin(), order.end(), 0u);
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
            std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            std::vector<std::uint32_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(stop));
            std::sort(chunk.begin(), chunk.end());
            Batch batch = gather_batch(client.data, chunk);
            loss_and_gradient(model, w, batch, grad);
            if (algo == Algorithm::fedprox) {
                for (std::size_t k = 0; k < grad.size(); ++k) {
                    grad[k] += params.mu * (w[k] - global_w[k]);
                }
            } else if (algo == Algorithm::feddyn) {
                for (std::size_t k = 0; k < grad.size(); ++k) {
                    grad[k] += -client.feddyn_h[k] + params.alpha * (w[k] - global_w[k]);
                }
            }
            axpy_inplace(-eta, grad, w);
            if (!all_finite(w)) {
                fail(ErrorKind::numeric, "local_update: non-finite parameters for client " +
                                             std::to_string(client.client_id));
            }
        }
    }
    if (algo == Algorithm::feddyn) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            client.feddyn_h[k] -= params.alpha * (w[k] - global_w[k]);
        }
    }
    return w;
}

void server_update(Algorithm algo, ServerState& server, const ParamVector& aggregated,
                   const AlgoParams& params) {
    check_same_length(server.global_params, aggregated, "server_update");
    if (algo == Algorithm::fedadam) {
        if (server.adam_m.size() != aggregated.size()) {
            server.adam_m.assign(aggregated.size(), 0.0);
            server.adam_v.assign(aggregated.size(), 0.0);
        }
        for (std::size_t k = 0; k < aggregated.size(); ++k) {
            double delta = aggregated[k] - server.global_params[k];
            server.adam_m[k] = params.beta1 * server.adam_m[k] + (1.0 - params.beta1) * delta;
            server.adam_v[k] = params.beta2 * server.adam_v[k] + (1.0 - params.beta2) * delta * delta;
            server.global_params[k] +=
                params.server_lr * server.adam_m[k] / (std::sqrt(server.adam_v[k]) + params.tau);
        }
    } else {
        server.global_params = aggregated;
    }
    ++server.round;
}

std::vector<double> fedcos_weights(const std::vector<ParamVector>& locals, const ParamVector& global_w,
                                   const std::vector<double>& theta) {
    if (locals.size() != theta.size()) {
        fail(ErrorKind::invalid_argument, "fedcos_weights: locals and weights must align");
    }
    double global_norm = l2norm(global_w);
    std::vector<double> weights(locals.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < locals.size(); ++i) {
        double local_norm = l2norm(locals[i]);
        double cosine = 0.0;
        if (local_norm > 0.0 && global_norm > 0.0) {
            cosine = dot(locals[i], global_w) / (local_norm * global_norm);
        }
        weights[i] = std::max(0.0, cosine) * theta[i];
        total += weights[i];
    }
    if (total <= 0.0) return theta;  // every direction opposed or zero
    for (double& w : weights) w /= total;
    return weights;
}

double fednorm_rate(double theta_i, const ParamVector& grad, const ParamVector& phi1_t,
                    const ParamVector& phi1_next, double beta) {
    (void)theta_i;
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::invalid_argument, "fednorm_rate: beta must lie in (0,1)");
    check_same_length(grad, phi1_t, "fednorm_rate");
    check_same_length(grad, phi1_next, "fednorm_rate");
    double numerator = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
        numerator += (phi1_t[k] - phi1_next[k]) * grad[k];
    }
    double eta = beta * numerator / ((1.0 - beta) + beta * l2norm_sq(grad));
    return std::clamp(eta, 0.0, 1.0);
}

EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const Batch& test) {
    if (test.size() == 0) fail(ErrorKind::invalid_argument, "evaluate: empty test set");
    EvalResult result;
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::vector<double> probs = forward_probs(spec, params, test.row(i));
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < probs.size(); ++c) {
            if (probs[c] > probs[argmax]) argmax = c;  // ties keep the lowest class index
        }
        if (static_cast<int>(argmax) == test.labels[i]) ++correct;
        total_loss += -std::log(std::max(probs[static_cast<std::size_t>(test.labels[i])], 1e-12));
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    result.loss = total_loss / static_cast<double>(test.size());
    return result;
}

MeanFieldTrajectory precompute_trajectory(const TrainingConfig& config, const LabeledDataset& train) {
    validate_training_config(config, train.size());
    std::vector<ClientPartition> parts = partition(train, config.partition);
    std::vector<double> theta(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) theta[i] = parts[i].theta;

    RngStream init_rng(config.seed, streams::id(streams::kInitParams, 0));
    ParamVector w0 = init_params(config.model, init_rng);

    // One fixed seeded mini-batch per (client, step); the same batch is used
    // by every outer iteration so the map being iterated stays deterministic.
    std::vector<std::vector<std::vector<std::uint32_t>>> batch_positions(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        batch_positions[i].resize(static_cast<std::size_t>(config.rounds));
        for (int t = 0; t < config.rounds; ++t) {
            RngStream rng(config.seed, streams::id(streams::kFixedPointBatch, i, static_cast<std::uint64_t>(t)));
            batch_positions[i][static_cast<std::size_t>(t)] =
                draw_batch_positions(parts[i].indices.size(), config.batch_size, rng);
        }
    }
    std::vector<Batch> client_data(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) {
        client_data[i] = gather_batch(train.examples, parts[i].indices);
    }

    StepGradientFn grad_fn = [&](int client, int t, const ParamVector& at) {
        Batch batch = gather_batch(client_data[static_cast<std::size_t>(client)],
                                   batch_positions[static_cast<std::size_t>(client)][static_cast<std::size_t>(t)]);
        return gradient(config.model, at, batch);
    };

    FixedPointOptions options;
    options.T = config.rounds;
    options.eps1 = config.fp_eps1;
    options.eps2 = config.fp_eps2;
    options.max_outer = config.fp_max_outer;
    options.rate = config.rate_solve;
    options.rate.beta = config.beta;
    options.eta_init = config.base_lr;
    return fixed_point(theta, w0, grad_fn, options);
}

RunHistory run_experiment(const TrainingConfig& config, const LabeledDataset& train,
                          const LabeledDataset& test, const MeanFieldTrajectory* trajectory) {
    validate_training_config(config, train.size());
    bool needs_traj = algorithm_needs_trajectory(config.algorithm);
    if (needs_traj && trajectory == nullptr) {
        fail(ErrorKind::config, std::string(algorithm_name(config.algorithm)) +
                                    " requires a precomputed trajectory");
    }
    if (!needs_traj && trajectory != nullptr) {
        fail(ErrorKind::config, std::string(algorithm_name(config.algorithm)) +
                                    " does not take a trajectory");
    }

    std::vector<ClientPartition> parts = partition(train, config.partition);
    const int num_clients = static_cast<int>(parts.size());
    int param_dim = param_count(config.model);
    if (trajectory != nullptr) {
        if (trajectory->d != param_dim || trajectory->num_clients != num_clients ||
            trajectory->T < config.rounds) {
            fail(ErrorKind::config,
                 "trajectory does not match the experiment: trajectory (d=" + std::to_string(trajectory->d) +
                     ", N=" + std::to_string(trajectory->num_clients) + ", T=" + std::to_string(trajectory->T) +
                     ") vs config (d=" + std::to_string(param_dim) + ", N=" + std::to_string(num_clients) +
                     ", T=" + std::to_string(config.rounds) + ")");
        }
    }

    RngStream init_rng(config.seed, streams::id(streams::kInitParams, 0));
    ParamVector w0 = init_params(config.model, init_rng);

    std::vector<ClientRunState> clients(static_cast<std::size_t>(num_clients));
    for (int i = 0; i < num_clients; ++i) {
        ClientRunState& client = clients[static_cast<std::size_t>(i)];
        client.client_id = i;
        client.partition = parts[static_cast<std::size_t>(i)];
        client.data = gather_batch(train.examples, parts[static_cast<std::size_t>(i)].indices);
        client.local_params = w0;
    }
    std::vector<double> prev_used_eta(static_cast<std::size_t>(num_clients), config.base_lr);

    ServerState server;
    server.global_params = w0;

    int sample_count = static_cast<int>(std::ceil(config.sample_fraction * num_clients - 1e-12));
    sample_count = std::clamp(sample_count, 1, num_clients);

    RateSolveConfig rate_cfg = config.rate_solve;
    rate_cfg.beta = config.beta;

    RunHistory history;
    history.rounds.reserve(static_cast<std::size_t>(config.rounds));

    // Retained for the post-run bound diagnostics on fedent runs.
    struct RoundTrace {
        std::vector<int> sampled;
        std::vector<double> used_eta;
        std::vector<double> rate_grad_norms;
    };
    std::vector<RoundTrace> traces;
    std::vector<ParamVector> visited_globals;
    if (config.algorithm == Algorithm::fedent) {
        traces.reserve(static_cast<std::size_t>(config.rounds));
        visited_globals.reserve(static_cast<std::size_t>(config.rounds) + 1);
        visited_globals.push_back(server.global_params);
    }

    for (int round = 0; round < config.rounds; ++round) {
        auto started = std::chrono::steady_clock::now();
        RngStream sample_rng(config.seed, streams::id(streams::kClientSampling, static_cast<std::uint64_t>(round)));
        std::vector<int> sampled = sample_clients(num_clients, sample_count, sample_rng);

        double theta_mass = 0.0;
        for (int i : sampled) theta_mass += parts[static_cast<std::size_t>(i)].theta;
        std::vector<double> round_theta(sampled.size());
        for (std::size_t s = 0; s < sampled.size(); ++s) {
            round_theta[s] = parts[static_cast<std::size_t>(sampled[s])].theta / theta_mass;
        }

        RoundTrace trace;
        std::vector<ParamVector> locals(sampled.size());
        std::vector<double> used_etas(sampled.size(), config.base_lr);
        for (std::size_t s = 0; s < sampled.size(); ++s) {
            int i = sampled[s];
            ClientRunState& client = clients[static_cast<std::size_t>(i)];
            double eta = config.base_lr;
            if (config.algorithm == Algorithm::fedent || config.algorithm == Algorithm::fednorm) {
                RngStream rate_rng(config.seed,
                                   streams::id(streams::kRateBatch, static_cast<std::uint64_t>(i),
                                               static_cast<std::uint64_t>(round)));
                std::vector<std::uint32_t> positions =
                    draw_batch_positions(client.data.size(), config.batch_size, rate_rng);
                Batch rate_batch = gather_batch(client.data, positions);
                ParamVector rate_grad = gradient(config.model, server.global_params, rate_batch);
                double solved = 0.0;
                if (config.algorithm == Algorithm::fedent) {
                    RateSolution sol = solve_learning_rate(
                        client.partition.theta, rate_grad,
                        trajectory->phi1[static_cast<std::size_t>(round)],
                        trajectory->phi2[static_cast<std::size_t>(round) + 1], rate_cfg,
                        trajectory->eta[static_cast<std::size_t>(i)][static_cast<std::size_t>(round)]);
                    solved = sol.eta;
                } else {
                    solved = fednorm_rate(client.partition.theta, rate_grad,
                                          trajectory->phi1[static_cast<std::size_t>(round)],
                                          trajectory->phi1[static_cast<std::size_t>(round) + 1],
                                          config.beta);
                }
                eta = decay_lr(prev_used_eta[static_cast<std::size_t>(i)], solved, config.gamma);
                if (config.algorithm == Algorithm::fedent) {
                    trace.rate_grad_norms.push_back(l2norm(rate_grad));
                }
            }
            RngStream batch_rng(config.seed, streams::id(streams::kLocalBatches, static_cast<std::uint64_t>(i),
                                                         static_cast<std::uint64_t>(round)));
            locals[s] = local_update(config.algorithm, config.model, client, server.global_params, eta,
                                     config.local_epochs, config.batch_size, batch_rng, config.algo_params);
            client.local_params = locals[s];
            client.eta_history.push_back(eta);
            prev_used_eta[static_cast<std::size_t>(i)] = eta;
            used_etas[s] = eta;
        }

        std::vector<double> agg_weights = round_theta;
        if (config.algorithm == Algorithm::fedcos) {
            agg_weights = fedcos_weights(locals, server.global_params, round_theta);
        }
        ParamVector previous_global = server.global_params;
        ParamVector aggregated = aggregate(locals, agg_weights);
        server_update(config.algorithm, server, aggregated, config.algo_params);

        RoundRecord record;
        record.round = round;
        EvalResult train_eval = evaluate(config.model, server.global_params, train.examples);
        EvalResult test_eval = evaluate(config.model, server.global_params, test.examples);
        record.train_loss = train_eval.loss;
        record.test_accuracy = test_eval.accuracy;
        record.mean_eta =
            std::accumulate(used_etas.begin(), used_etas.end(), 0.0) / static_cast<double>(used_etas.size());
        record.entropy = system_entropy(entropy_shares(locals, round_theta, std::nullopt));
        std::vector<double> drifts = drift(server.global_params, locals);
        record.max_drift = drifts.empty() ? 0.0 : *std::max_element(drifts.begin(), drifts.end());
        {
            ParamVector gap = axpy(-1.0, previous_global, server.global_params);
            record.round_gap = l2norm(gap);
        }
        record.wallclock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - started)
                                  .count();
        history.rounds.push_back(record);

        if (config.algorithm == Algorithm::fedent) {
            trace.sampled = sampled;
            trace.used_eta = used_etas;
            traces.push_back(std::move(trace));
            visited_globals.push_back(server.global_params);
        }
    }

    history.final_accuracy = history.rounds.back().test_accuracy;
    history.final_train_loss = history.rounds.back().train_loss;
    history.final_params = server.global_params;

    if (config.algorithm == Algorithm::fedent) {
        // Empirical D over everything the run actually touched: probe-based
        // gradients around the visited globals plus the rate-solve gradients
        // themselves. The bounds below are then evaluated exactly as stated,
        // from the trajectory's estimators.
        RngStream probe_rng(config.seed, streams::id(streams::kBoundsProbe));
        SmoothnessEstimate est =
            estimate_bounds(config.model, train.examples, visited_globals, config.bound_probe_trials,
                            config.bound_probe_radius, probe_rng);
        double d_hat = est.d_bound;
        for (const RoundTrace& trace : traces) {
            for (double g : trace.rate_grad_norms) d_hat = std::max(d_hat, g);
        }
        history.d_hat = d_hat;
        history.l_hat = est.lipschitz;

        std::vector<double> full_theta(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i) full_theta[i] = parts[i].theta;

        for (int round = 0; round < config.rounds; ++round) {
            RoundRecord& record = history.rounds[static_cast<std::size_t>(round)];
            const RoundTrace& trace = traces[static_cast<std::size_t>(round)];
            double phi1_norm = l2norm(trajectory->phi1[static_cast<std::size_t>(round)]);
            double phi2_next = trajectory->phi2[static_cast<std::size_t>(round) + 1];
            record.drift_bound = drift_bound_G(full_theta, config.beta, d_hat, phi1_norm, phi2_next);
            record.round_gap_bound =
                round_gap_bound(full_theta, config.beta, d_hat, phi1_norm, phi2_next, nullptr);
            for (std::size_t s = 0; s < trace.sampled.size(); ++s) {
                double bound = lr_upper_bound(full_theta[static_cast<std::size_t>(trace.sampled[s])],
                                              config.beta, d_hat, phi1_norm, phi2_next);
                if (trace.used_eta[s] > bound + 1e-12) {
                    ++record.eta_bound_violations;
                }
            }
            history.total_eta_violations += record.eta_bound_violations;
        }
    }
    return history;
}

}  // namespace fedent
