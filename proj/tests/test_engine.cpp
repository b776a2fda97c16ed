#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/engine.hpp"
#include "oracles.hpp"

using namespace fedent;

namespace {

struct TinyWorld {
    TrainingConfig config;
    LabeledDataset train;
    LabeledDataset test;
};

TinyWorld make_tiny_world(Algorithm algo, std::uint64_t seed) {
    TinyWorld world;
    world.config.algorithm = algo;
    world.config.model.kind = ModelKind::softmax_regression;
    world.config.model.input_dim = 2;
    world.config.model.num_classes = 2;
    world.config.partition.scheme = PartitionScheme::iid;
    world.config.partition.num_clients = 4;
    world.config.partition.seed = 5;
    world.config.rounds = 3;
    world.config.local_epochs = 2;
    world.config.batch_size = 8;
    world.config.base_lr = 0.05;
    world.config.beta = 0.9;
    world.config.gamma = 0.5;
    world.config.sample_fraction = 1.0;
    world.config.seed = seed;
    RngStream train_rng(77, 0);
    RngStream test_rng(77, 1);
    world.train = make_synthetic(2, 40, 2, 3.0, train_rng);
    world.test = make_synthetic(2, 20, 2, 3.0, test_rng);
    return world;
}

bool histories_identical(const RunHistory& a, const RunHistory& b) {
    if (a.rounds.size() != b.rounds.size()) return false;
    for (std::size_t r = 0; r < a.rounds.size(); ++r) {
        const RoundRecord& x = a.rounds[r];
        const RoundRecord& y = b.rounds[r];
        if (x.train_loss != y.train_loss || x.test_accuracy != y.test_accuracy ||
            x.mean_eta != y.mean_eta || x.entropy != y.entropy || x.max_drift != y.max_drift ||
            x.drift_bound != y.drift_bound || x.eta_bound_violations != y.eta_bound_violations) {
            return false;
        }
    }
    return a.final_params == b.final_params;
}

}  // namespace

TEST_CASE("aggregate: midpoint, fixed point, naive oracle") {
    CHECK(aggregate({ParamVector{1.0}, ParamVector{3.0}}, {0.5, 0.5}) == ParamVector{2.0});

    ParamVector same{0.25, -1.5};
    ParamVector got = aggregate({same, same, same}, {0.2, 0.3, 0.5});
    CHECK(got[0] == doctest::Approx(same[0]).epsilon(1e-15));
    CHECK(got[1] == doctest::Approx(same[1]).epsilon(1e-15));

    RngStream rng(88, 0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ParamVector> locals(5, ParamVector(7));
        for (ParamVector& w : locals) {
            for (double& v : w) v = rng.normal();
        }
        std::vector<double> theta{0.1, 0.2, 0.3, 0.15, 0.25};
        ParamVector mine = aggregate(locals, theta);
        std::vector<double> expected = oracles::naive_aggregate(
            std::vector<std::vector<double>>(locals.begin(), locals.end()), theta);
        for (std::size_t k = 0; k < mine.size(); ++k) {
            CHECK(oracles::rel_err(mine[k], expected[k]) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(aggregate({ParamVector{1.0}}, {0.5}), Error);  // weights must sum to 1
}

TEST_CASE("local_update with eta 0 returns the global parameters unchanged") {
    TinyWorld world = make_tiny_world(Algorithm::fedavg, 1);
    std::vector<ClientPartition> parts = partition(world.train, world.config.partition);
    ClientRunState client;
    client.client_id = 0;
    client.partition = parts[0];
    client.data = gather_batch(world.train.examples, parts[0].indices);
    ParamVector global(static_cast<std::size_t>(param_count(world.config.model)), 0.25);
    ParamVector out = local_update(Algorithm::fedavg, world.config.model, client, global, 0.0, 3, 4,
                                   RngStream(1, 2), world.config.algo_params);
    CHECK(out == global);
}

TEST_CASE("one full-batch epoch of fedavg is a single hand-computable gradient step") {
    ModelSpec spec;
    spec.kind = ModelKind::softmax_regression;
    spec.input_dim = 1;
    spec.num_classes = 2;

    ClientRunState client;
    client.client_id = 0;
    client.data.input_dim = 1;
    client.data.inputs = {1.0};
    client.data.labels = {0};

    ParamVector global(4, 0.0);
    AlgoParams params;
    ParamVector stepped = local_update(Algorithm::fedavg, spec, client, global, 0.1, 1, 8,
                                       RngStream(3, 3), params);
    // Zero parameters, one example (x=1, y=0): probs are (1/2, 1/2), so
    // dlogits = (-1/2, 1/2), grad = [-0.5, 0.5, -0.5, 0.5] over [W0,W1,b0,b1].
    CHECK(stepped[0] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(stepped[1] == doctest::Approx(-0.05).epsilon(1e-15));
    CHECK(stepped[2] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(stepped[3] == doctest::Approx(-0.05).epsilon(1e-15));

    // And equals global - eta * gradient evaluated at global.
    ParamVector grad = gradient(spec, global, client.data);
    ParamVector expected = axpy(-0.1, grad, global);
    CHECK(stepped == expected);
}

TEST_CASE("fedprox with mu 0 and feddyn with alpha 0 reduce to fedavg bit-identically") {
    TinyWorld base = make_tiny_world(Algorithm::fedavg, 9);
    RunHistory avg = run_experiment(base.config, base.train, base.test, nullptr);

    TinyWorld prox = make_tiny_world(Algorithm::fedprox, 9);
    prox.config.algo_params.mu = 0.0;
    RunHistory prox_run = run_experiment(prox.config, prox.train, prox.test, nullptr);
    CHECK(histories_identical(avg, prox_run));

    TinyWorld dyn = make_tiny_world(Algorithm::feddyn, 9);
    dyn.config.algo_params.alpha = 0.0;
    RunHistory dyn_run = run_experiment(dyn.config, dyn.train, dyn.test, nullptr);
    CHECK(histories_identical(avg, dyn_run));
}

TEST_CASE("fedprox with positive mu actually changes the trajectory") {
    TinyWorld a = make_tiny_world(Algorithm::fedavg, 10);
    TinyWorld b = make_tiny_world(Algorithm::fedprox, 10);
    b.config.algo_params.mu = 0.5;
    b.config.local_epochs = 4;
    a.config.local_epochs = 4;
    RunHistory avg = run_experiment(a.config, a.train, a.test, nullptr);
    RunHistory prox = run_experiment(b.config, b.train, b.test, nullptr);
    CHECK_FALSE(histories_identical(avg, prox));
}

TEST_CASE("server_update: fedavg adopts the aggregate, fedadam follows the recurrences") {
    ServerState server;
    server.global_params = {1.0, 2.0};
    server_update(Algorithm::fedavg, server, ParamVector{3.0, 4.0}, AlgoParams{});
    CHECK(server.global_params == ParamVector{3.0, 4.0});
    CHECK(server.round == 1);

    // Zero pseudo-gradient with zero moments leaves the model fixed.
    ServerState adam;
    adam.global_params = {0.5};
    server_update(Algorithm::fedadam, adam, ParamVector{0.5}, AlgoParams{});
    CHECK(adam.global_params == ParamVector{0.5});

    // Single step on d=1: delta = 0.1.
    ServerState adam2;
    adam2.global_params = {2.0};
    AlgoParams params;
    server_update(Algorithm::fedadam, adam2, ParamVector{2.1}, params);
    double m = (1.0 - params.beta1) * 0.1;
    double v = (1.0 - params.beta2) * 0.1 * 0.1;
    double expected = 2.0 + params.server_lr * m / (std::sqrt(v) + params.tau);
    CHECK(adam2.global_params[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(adam2.adam_v[0] >= 0.0);
}

TEST_CASE("fedcos weights: aligned, orthogonal, and the 0/60/90 toy") {
    ParamVector global{1.0, 0.0};
    std::vector<double> theta{1.0 / 3, 1.0 / 3, 1.0 / 3};

    std::vector<ParamVector> aligned(3, global);
    std::vector<double> w = fedcos_weights(aligned, global, theta);
    for (double value : w) CHECK(value == doctest::Approx(1.0 / 3).epsilon(1e-12));

    std::vector<ParamVector> mixed{ParamVector{2.0, 0.0},
                                   ParamVector{0.5, std::sqrt(3.0) / 2.0},
                                   ParamVector{0.0, 1.0}};
    std::vector<double> got = fedcos_weights(mixed, global, theta);
    CHECK(got[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(got[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(got[2] == doctest::Approx(0.0).epsilon(1e-12));

    // All-zero similarity falls back to theta.
    std::vector<ParamVector> opposed{ParamVector{-1.0, 0.0}, ParamVector{-2.0, 0.0},
                                     ParamVector{0.0, -3.0}};
    std::vector<double> standin{0.0, -1.0, 0.0};
    (void)standin;
    CHECK(fedcos_weights(opposed, global, theta) == theta);
}

TEST_CASE("fednorm rate: zero gradient, small beta, and the d=1 toy") {
    ParamVector phi1{1.0};
    ParamVector phi1_next{0.9};
    CHECK(fednorm_rate(0.5, ParamVector{0.0}, phi1, phi1_next, 0.5) == 0.0);
    CHECK(fednorm_rate(0.5, ParamVector{0.2}, phi1, phi1_next, 1e-9) <= 1e-8);
    double eta = fednorm_rate(0.5, ParamVector{0.2}, phi1, phi1_next, 0.5);
    CHECK(eta == doctest::Approx(0.01 / 0.52).epsilon(1e-9));
    // Clamped into [0, 1].
    CHECK(fednorm_rate(0.5, ParamVector{-5.0}, phi1, phi1_next, 0.5) == 0.0);
}

TEST_CASE("evaluate: memorization, uniform logits, and the naive loop oracle") {
    ModelSpec spec;
    spec.kind = ModelKind::softmax_regression;
    spec.input_dim = 2;
    spec.num_classes = 2;
    RngStream rng(15, 0);
    LabeledDataset ten = make_synthetic(2, 5, 2, 8.0, rng);
    ParamVector w(static_cast<std::size_t>(param_count(spec)), 0.0);
    for (int step = 0; step < 2000; ++step) {
        ParamVector g = gradient(spec, w, ten.examples);
        axpy_inplace(-0.5, g, w);
    }
    CHECK(evaluate(spec, w, ten.examples).accuracy == 1.0);

    // All-zero parameters on a balanced binary set: equal logits, argmax
    // resolves to class 0, so accuracy is exactly the share of label 0.
    Batch balanced;
    balanced.input_dim = 2;
    balanced.inputs = {1.0, 0.0, 0.0, 1.0, -1.0, 0.5, 2.0, -2.0};
    balanced.labels = {0, 1, 0, 1};
    ParamVector zero(static_cast<std::size_t>(param_count(spec)), 0.0);
    CHECK(evaluate(spec, zero, balanced).accuracy == 0.5);

    // Naive per-example loop oracle.
    RngStream rng2(16, 0);
    LabeledDataset data = make_synthetic(2, 30, 2, 1.0, rng2);
    ParamVector params = init_params(spec, rng2);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::vector<double> probs = forward_probs(spec, params, data.examples.row(i));
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.size(); ++c) {
            if (probs[c] > probs[best]) best = c;
        }
        if (static_cast<int>(best) == data.examples.labels[i]) ++correct;
    }
    double expected = static_cast<double>(correct) / static_cast<double>(data.size());
    CHECK(evaluate(spec, params, data.examples).accuracy == expected);
}

TEST_CASE("run_experiment is a pure function of config and seed") {
    TinyWorld world = make_tiny_world(Algorithm::fedavg, 21);
    RunHistory a = run_experiment(world.config, world.train, world.test, nullptr);
    RunHistory b = run_experiment(world.config, world.train, world.test, nullptr);
    CHECK(histories_identical(a, b));
    CHECK(a.rounds.size() == static_cast<std::size_t>(world.config.rounds));
}

TEST_CASE("full participation, one full-batch epoch: the global step is the weighted gradient step") {
    TinyWorld world = make_tiny_world(Algorithm::fedavg, 33);
    world.config.rounds = 1;
    world.config.local_epochs = 1;
    world.config.batch_size = 1000000;  // full batch
    world.config.sample_fraction = 1.0;

    RunHistory run = run_experiment(world.config, world.train, world.test, nullptr);

    RngStream init_rng(world.config.seed, streams::id(streams::kInitParams, 0));
    ParamVector w0 = init_params(world.config.model, init_rng);
    std::vector<ClientPartition> parts = partition(world.train, world.config.partition);
    ParamVector expected = w0;
    ParamVector sum(w0.size(), 0.0);
    for (const ClientPartition& part : parts) {
        Batch data = gather_batch(world.train.examples, part.indices);
        ParamVector g = gradient(world.config.model, w0, data);
        axpy_inplace(part.theta, g, sum);
    }
    axpy_inplace(-world.config.base_lr, sum, expected);
    REQUIRE(run.final_params.size() == expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) {
        CHECK(std::abs(run.final_params[k] - expected[k]) <= 1e-12);
    }
}

TEST_CASE("fedent requires a trajectory and validates its shape") {
    TinyWorld world = make_tiny_world(Algorithm::fedent, 2);
    CHECK_THROWS_WITH_AS(run_experiment(world.config, world.train, world.test, nullptr),
                         doctest::Contains("trajectory"), Error);

    MeanFieldTrajectory trajectory = precompute_trajectory(world.config, world.train);
    CHECK(trajectory.num_clients == world.config.partition.num_clients);
    CHECK(trajectory.T == world.config.rounds);

    MeanFieldTrajectory wrong = trajectory;
    wrong.num_clients = 3;
    wrong.eta.pop_back();
    CHECK_THROWS_AS(run_experiment(world.config, world.train, world.test, &wrong), Error);

    RunHistory run = run_experiment(world.config, world.train, world.test, &trajectory);
    CHECK(run.rounds.size() == static_cast<std::size_t>(world.config.rounds));
    CHECK(run.total_eta_violations == 0);
    CHECK(run.d_hat > 0.0);

    // Baselines must not be handed a trajectory.
    TinyWorld avg = make_tiny_world(Algorithm::fedavg, 2);
    CHECK_THROWS_AS(run_experiment(avg.config, avg.train, avg.test, &trajectory), Error);
}

TEST_CASE("degenerate beta freezes the fedent trajectory") {
    TinyWorld world = make_tiny_world(Algorithm::fedent, 4);
    world.config.beta = 1e-12;
    world.config.gamma = 0.0;  // expose the solved rates directly
    MeanFieldTrajectory trajectory = precompute_trajectory(world.config, world.train);
    for (const auto& row : trajectory.eta) {
        for (double eta : row) CHECK(eta <= 1e-6);
    }
    RunHistory run = run_experiment(world.config, world.train, world.test, &trajectory);
    for (const RoundRecord& record : run.rounds) {
        CHECK(record.mean_eta <= 1e-6);
        CHECK(record.round_gap <= 1e-6);
    }
}

TEST_CASE("fednorm consumes the trajectory and stays within [0, 1] rates") {
    TinyWorld world = make_tiny_world(Algorithm::fednorm, 6);
    MeanFieldTrajectory trajectory = precompute_trajectory(world.config, world.train);
    RunHistory run = run_experiment(world.config, world.train, world.test, &trajectory);
    for (const RoundRecord& record : run.rounds) {
        CHECK(record.mean_eta >= 0.0);
        CHECK(record.mean_eta <= 1.0);
    }
}

TEST_CASE("client sampling renormalizes the aggregation weights") {
    TinyWorld world = make_tiny_world(Algorithm::fedavg, 8);
    world.config.sample_fraction = 0.5;  // 2 of 4 clients
    RunHistory run = run_experiment(world.config, world.train, world.test, nullptr);
    CHECK(run.rounds.size() == static_cast<std::size_t>(world.config.rounds));
    // Entropy over two clients is bounded by ln 2.
    for (const RoundRecord& record : run.rounds) {
        CHECK(record.entropy >= -std::log(2.0) - 1e-9);
        CHECK(record.entropy <= 1e-12);
    }
}

TEST_CASE("fedadam and fedcos run end to end") {
    for (Algorithm algo : {Algorithm::fedadam, Algorithm::fedcos}) {
        TinyWorld world = make_tiny_world(algo, 11);
        RunHistory run = run_experiment(world.config, world.train, world.test, nullptr);
        CHECK(run.rounds.size() == static_cast<std::size_t>(world.config.rounds));
        CHECK(std::isfinite(run.final_train_loss));
    }
}
