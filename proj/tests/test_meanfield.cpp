#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/data.hpp"
#include "core/meanfield.hpp"
#include "core/models.hpp"
#include "oracles.hpp"

using namespace fedent;

TEST_CASE("entropy shares: single client, symmetry, weighted evaluation") {
    ParamVector w{1.0, 2.0};
    CHECK(entropy_shares({w}, {1.0}, std::nullopt).p == std::vector<double>{1.0});

    EntropyShares sym = entropy_shares({w, w}, {0.5, 0.5}, std::nullopt);
    CHECK(sym.p[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sym.p[1] == doctest::Approx(0.5).epsilon(1e-12));

    // |w1|^2 = |w2|^2 = 2 with theta = [0.25, 0.75] reduces to theta.
    ParamVector a{1.0, 1.0};
    ParamVector b{std::sqrt(2.0), 0.0};
    EntropyShares weighted = entropy_shares({a, b}, {0.25, 0.75}, std::nullopt);
    CHECK(weighted.p[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(weighted.p[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("entropy shares reduce to theta whenever norms are equal") {
    RngStream rng(12, 0);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 2 + static_cast<int>(rng.next_below(6));
        std::vector<double> theta(static_cast<std::size_t>(n));
        double total = 0.0;
        for (double& t : theta) {
            t = rng.uniform(0.1, 1.0);
            total += t;
        }
        for (double& t : theta) t /= total;
        // Same vector for everyone.
        ParamVector w(4);
        for (double& v : w) v = rng.normal();
        std::vector<ParamVector> locals(static_cast<std::size_t>(n), w);
        EntropyShares shares = entropy_shares(locals, theta, std::nullopt);
        for (int i = 0; i < n; ++i) {
            CHECK(std::abs(shares.p[static_cast<std::size_t>(i)] - theta[static_cast<std::size_t>(i)]) <=
                  1e-12);
        }
    }
}

TEST_CASE("entropy shares reject degenerate parameter mass") {
    ParamVector zero(3, 0.0);
    CHECK_THROWS_WITH_AS(entropy_shares({zero, zero}, {0.5, 0.5}, std::nullopt),
                         doctest::Contains("degenerate parameter mass"), Error);
}

TEST_CASE("entropy shares accept an explicit mean-field denominator") {
    ParamVector a{2.0};  // |a|^2 = 4
    EntropyShares shares = entropy_shares({a}, {0.5}, 8.0);
    CHECK(shares.p[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("system entropy: uniform, one-hot, and direct evaluation") {
    EntropyShares uniform{{0.25, 0.25, 0.25, 0.25}};
    CHECK(system_entropy(uniform) == doctest::Approx(-std::log(4.0)).epsilon(1e-12));

    EntropyShares onehot{{0.0, 1.0, 0.0}};
    CHECK(system_entropy(onehot) == 0.0);

    EntropyShares two{{0.25, 0.75}};
    CHECK(system_entropy(two) == doctest::Approx(-0.562335).epsilon(1e-6));
}

TEST_CASE("system entropy is permutation invariant and bounded") {
    RngStream rng(3, 14);
    for (int trial = 0; trial < 30; ++trial) {
        int n = 2 + static_cast<int>(rng.next_below(8));
        std::vector<double> p(static_cast<std::size_t>(n));
        double total = 0.0;
        for (double& v : p) {
            v = rng.uniform_open01();
            total += v;
        }
        for (double& v : p) v /= total;
        EntropyShares shares{p};
        double h = system_entropy(shares);
        CHECK(h <= 0.0 + 1e-12);
        CHECK(h >= -std::log(static_cast<double>(n)) - 1e-9);
        std::vector<double> shuffled = p;
        rng.shuffle(shuffled);
        CHECK(system_entropy(EntropyShares{shuffled}) == doctest::Approx(h).epsilon(1e-12));
    }
}

TEST_CASE("lr_upper_bound evaluates the closed form") {
    CHECK(lr_upper_bound(0.1, 0.5, 2.0, 1.0, 4.0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(lr_upper_bound(0.1, 1e-9, 2.0, 1.0, 4.0) == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(lr_upper_bound(0.1, 0.5, 0.0, 1.0, 4.0) == 0.0);
    CHECK_THROWS_AS(lr_upper_bound(0.1, 0.5, 1.0, 1.0, 0.0), Error);
}

TEST_CASE("decay_lr blends") {
    CHECK(decay_lr(0.5, 0.2, 0.0) == 0.2);
    CHECK(decay_lr(0.5, 0.2, 1.0) == 0.5);
    CHECK(decay_lr(0.01, 0.03, 0.99) == doctest::Approx(0.0102).epsilon(1e-12));
    CHECK_THROWS_AS(decay_lr(0.1, 0.1, 1.5), Error);
}

TEST_CASE("rate solver: zero gradient and vanishing beta") {
    RateSolveConfig cfg;
    cfg.beta = 0.9;
    ParamVector phi1{1.0, 2.0};
    ParamVector zero(2, 0.0);
    RateSolution sol = solve_learning_rate(0.5, zero, phi1, 1.0, cfg, 0.1);
    CHECK(sol.eta == 0.0);
    CHECK(sol.converged);

    cfg.beta = 1e-12;
    ParamVector grad{0.8, -0.2};
    RateSolution tiny = solve_learning_rate(0.5, grad, phi1, 1.0, cfg, 0.01);
    CHECK(tiny.eta <= 1e-6);
    CHECK(tiny.eta >= 0.0);
}

TEST_CASE("rate solver matches the grid-search residual oracle on the d=2 toy") {
    oracles::RateInstance inst;
    inst.theta = 0.5;
    inst.beta = 0.9;
    inst.phi1 = {1.0, 0.5};
    inst.grad = {0.8, -0.2};
    inst.phi2_next = 1.2;

    RateSolveConfig cfg;
    cfg.beta = inst.beta;
    RateSolution sol = solve_learning_rate(inst.theta, inst.grad, inst.phi1, inst.phi2_next, cfg, 0.0);
    CHECK(sol.converged);

    double g_norm = oracles::naive_norm(inst.grad);
    double hi = lr_upper_bound(inst.theta, inst.beta, g_norm, oracles::naive_norm(inst.phi1),
                               inst.phi2_next);
    double oracle_eta = oracles::grid_search_rate(inst, hi, 1000000);
    CHECK(std::abs(sol.eta - oracle_eta) <= 1e-5);
    CHECK(sol.eta >= 0.0);
    CHECK(sol.eta <= hi + 1e-12);
}

TEST_CASE("every solved rate respects the upper bound") {
    RngStream rng(2025, 0);
    RateSolveConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        cfg.beta = rng.uniform(0.05, 0.99);
        double theta = rng.uniform(0.05, 0.95);
        std::size_t d = 1 + rng.next_below(4);
        ParamVector phi1(d), grad(d);
        for (double& v : phi1) v = rng.normal();
        for (double& v : grad) v = rng.normal();
        double phi2_next = rng.uniform(0.2, 3.0) * std::max(l2norm_sq(phi1), 0.1);
        RateSolution sol =
            solve_learning_rate(theta, grad, phi1, phi2_next, cfg, rng.uniform(0.0, 0.1));
        double bound = lr_upper_bound(theta, cfg.beta, l2norm(grad), l2norm(phi1), phi2_next);
        CHECK(sol.eta >= 0.0);
        CHECK(sol.eta <= bound + 1e-12);
    }
}

TEST_CASE("fixed point of a zero-gradient model is the identity trajectory") {
    StepGradientFn flat = [](int, int, const ParamVector& at) {
        return ParamVector(at.size(), 0.0);
    };
    FixedPointOptions options;
    options.T = 6;
    options.rate.beta = 0.9;
    ParamVector w0{0.3, -0.4, 1.0};
    MeanFieldTrajectory traj = fixed_point({0.5, 0.5}, w0, flat, options);
    CHECK(traj.converged);
    CHECK(traj.outer_iterations == 1);
    for (int t = 0; t <= traj.T; ++t) {
        for (std::size_t k = 0; k < w0.size(); ++k) {
            CHECK(traj.phi1[static_cast<std::size_t>(t)][k] ==
                  doctest::Approx(w0[k]).epsilon(1e-15));
        }
    }
    for (const auto& row : traj.eta) {
        for (double eta : row) CHECK(eta == 0.0);
    }
}

namespace {

// Direct single-client dynamics: with one client the estimators must equal
// the client's own single-step trajectory, so each step's rate solves the
// scalar self-consistent equation
//   eta * (1 - beta) * |w - eta g|^2 = beta * (<g, w> - eta |g|^2)
// (the share p is identically 1). Solved by scanning for the smallest
// non-negative root and refining by bisection.
double oracle_single_client_rate(const ParamVector& w, const ParamVector& grad, double beta) {
    double num = oracles::naive_dot(w, grad);
    double g2 = oracles::naive_dot(grad, grad);
    double w2 = oracles::naive_dot(w, w);
    if (g2 == 0.0) return 0.0;
    auto residual = [&](double eta) {
        double wn2 = w2 - 2.0 * eta * num + eta * eta * g2;
        return eta * (1.0 - beta) * wn2 - beta * (num - eta * g2);
    };
    double hi = 2.0 * beta * std::sqrt(g2) * std::sqrt(w2) / ((1.0 - beta) * std::max(w2, 1e-30));
    if (residual(0.0) >= 0.0) return 0.0;
    const int scan = 200000;
    double lo = 0.0;
    double found = hi;
    for (int k = 1; k <= scan; ++k) {
        double eta = hi * static_cast<double>(k) / scan;
        if (residual(eta) >= 0.0) {
            lo = hi * static_cast<double>(k - 1) / scan;
            found = eta;
            break;
        }
    }
    for (int iter = 0; iter < 80; ++iter) {
        double mid = 0.5 * (lo + found);
        if (residual(mid) >= 0.0) {
            found = mid;
        } else {
            lo = mid;
        }
    }
    return found;
}

}  // namespace

TEST_CASE("single-client fixed point equals the direct dynamics and converges fast") {
    ModelSpec spec;
    spec.kind = ModelKind::softmax_regression;
    spec.input_dim = 2;
    spec.num_classes = 2;
    RngStream data_rng(41, 0);
    LabeledDataset data = make_synthetic(2, 20, 2, 2.0, data_rng);

    // Small initial parameters keep the toy in the contraction regime.
    ParamVector w0(static_cast<std::size_t>(param_count(spec)));
    RngStream init_rng(41, 1);
    for (double& v : w0) v = 0.01 * init_rng.normal();

    StepGradientFn grad_fn = [&](int, int, const ParamVector& at) {
        return gradient(spec, at, data.examples);
    };
    FixedPointOptions options;
    options.T = 5;
    options.rate.beta = 0.9;
    MeanFieldTrajectory traj = fixed_point({1.0}, w0, grad_fn, options);
    CHECK(traj.converged);
    CHECK(traj.outer_iterations <= 2);

    // Replay the coupled dynamics directly.
    ParamVector w = w0;
    for (int t = 0; t < options.T; ++t) {
        ParamVector g = gradient(spec, w, data.examples);
        double eta = oracle_single_client_rate(w, g, options.rate.beta);
        w = axpy(-eta, g, w);
        for (std::size_t k = 0; k < w.size(); ++k) {
            CHECK(std::abs(traj.phi1[static_cast<std::size_t>(t) + 1][k] - w[k]) <= 2.0 * options.eps1);
        }
        CHECK(std::abs(traj.eta[0][static_cast<std::size_t>(t)] - eta) <= 1e-3);
    }
}

TEST_CASE("fixed point reports non-convergence instead of spinning") {
    // Thresholds far below the attainable sweep-to-sweep drift: the cap must
    // end the iteration with converged = false.
    StepGradientFn grad_fn = [](int client, int t, const ParamVector& at) {
        ParamVector g(at.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] = 0.3 * std::cos(at[k] + client + t);
        }
        return g;
    };
    FixedPointOptions options;
    options.T = 4;
    options.max_outer = 3;
    options.eps1 = 1e-16;
    options.eps2 = 1e-16;
    options.rate.beta = 0.9;
    MeanFieldTrajectory traj = fixed_point({0.5, 0.5}, ParamVector{1.0, 1.0}, grad_fn, options);
    CHECK_FALSE(traj.converged);
    CHECK(traj.outer_iterations == 3);
}

TEST_CASE("trajectory file round-trips bit for bit") {
    StepGradientFn grad_fn = [](int client, int t, const ParamVector& at) {
        ParamVector g(at.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            g[k] = 0.01 * std::sin(static_cast<double>(client + 1) * at[k] + t);
        }
        return g;
    };
    FixedPointOptions options;
    options.T = 3;
    options.rate.beta = 0.8;
    MeanFieldTrajectory traj = fixed_point({0.25, 0.75}, ParamVector{0.5, -1.5, 2.0}, grad_fn, options);

    std::string path = (std::filesystem::temp_directory_path() / "fedent_traj_test.mft").string();
    save_trajectory(traj, path);
    MeanFieldTrajectory loaded = load_trajectory(path);
    CHECK(loaded.d == traj.d);
    CHECK(loaded.num_clients == traj.num_clients);
    CHECK(loaded.T == traj.T);
    CHECK(loaded.converged == traj.converged);
    CHECK(loaded.outer_iterations == traj.outer_iterations);
    for (int t = 0; t <= traj.T; ++t) {
        CHECK(loaded.phi1[static_cast<std::size_t>(t)] == traj.phi1[static_cast<std::size_t>(t)]);
        CHECK(loaded.phi2[static_cast<std::size_t>(t)] == traj.phi2[static_cast<std::size_t>(t)]);
    }
    CHECK(loaded.eta == traj.eta);

    // Saving twice produces identical bytes.
    std::string path2 = (std::filesystem::temp_directory_path() / "fedent_traj_test2.mft").string();
    save_trajectory(traj, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);
    CHECK(bytes1.substr(0, 4) == "MFT1");
}

TEST_CASE("trajectory loader rejects foreign files") {
    std::string path = (std::filesystem::temp_directory_path() / "fedent_not_traj.bin").string();
    std::ofstream out(path, std::ios::binary);
    out << "JUNKJUNKJUNK";
    out.close();
    CHECK_THROWS_WITH_AS(load_trajectory(path), doctest::Contains("bad magic"), Error);
}
