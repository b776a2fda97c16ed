#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/numerics.hpp"

namespace fedent {

// Normalized weighted squared-norm masses p_i of the clients' parameters.
struct EntropyShares {
    std::vector<double> p;
};

// p_i = theta_i * ||w_i||^2 / denominator. When phi2 is absent the
// denominator is the live aggregate sum_j theta_j * ||w_j||^2; when present
// it is the mean-field estimate. Denominators below 1e-30 are rejected as
// degenerate parameter mass.
EntropyShares entropy_shares(const std::vector<ParamVector>& local_params,
                             const std::vector<double>& theta, std::optional<double> phi2);

// sum_i p_i * ln(p_i) with 0 * ln 0 := 0; lies in [-ln N, 0].
double system_entropy(const EntropyShares& shares);

struct RateSolveConfig {
    double beta = 0.99;
    double inner_tol = 1e-8;
    int inner_max_iters = 100;
    double damping = 0.5;
};

struct RateSolution {
    double eta = 0.0;
    bool converged = true;
    int iterations = 0;
};

// Adaptive learning rate for one client and one step: the stationarity
// equation couples eta to itself through the share of the post-step
// parameters, so it is resolved by a damped scalar fixed-point iteration.
// Each inner iteration re-evaluates p at w_next = phi1 - eta * grad and takes
//
//   candidate = max{0, a * <phi1, grad> / ((1 - beta) * phi2_next + a * |grad|^2)},
//   a = beta * theta_i * (1 + ln p),
//
// then blends with the current iterate. The result is clamped to the
// gradient-norm form of the rate's upper bound, which implies the D-form
// bound for any valid gradient-norm bound D.
RateSolution solve_learning_rate(double theta_i, const ParamVector& grad, const ParamVector& phi1_t,
                                 double phi2_next, const RateSolveConfig& cfg, double eta_init);

// Scalar core of the solver; grad_phi1 = <grad, phi1>, grad_sq = |grad|^2,
// phi1_sq = |phi1|^2.
RateSolution solve_learning_rate_scalars(double theta_i, double grad_phi1, double grad_sq,
                                         double phi1_sq, double phi2_next, const RateSolveConfig& cfg,
                                         double eta_init);

// 2 * beta * theta_i * D * |phi1| / ((1 - beta) * phi2_next).
double lr_upper_bound(double theta_i, double beta, double d_bound, double phi1_norm, double phi2_next);

// gamma * eta_prev + (1 - gamma) * eta_new.
double decay_lr(double eta_prev, double eta_new, double gamma);

// Fixed-point estimator trajectories phi1(t), phi2(t) for t = 0..T plus the
// per-client rate matrix eta[i][t] for t = 0..T-1. The terminal rate policy
// is eta_i(T) = 0 and is not stored.
struct MeanFieldTrajectory {
    int d = 0;
    int num_clients = 0;
    int T = 0;
    std::vector<ParamVector> phi1;  // T + 1 entries
    std::vector<double> phi2;       // T + 1 entries, all > 0
    std::vector<std::vector<double>> eta;  // num_clients x T
    double beta = 0.0;
    bool converged = false;
    int outer_iterations = 0;
    double final_gap1 = 0.0;
    double final_gap2 = 0.0;
    int rate_solver_warnings = 0;  // inner iterations that hit the cap
    bool phi2_floored = false;
};

// Gradient of client i's local loss at `params`, evaluated on that client's
// fixed batch for simulated step t. The map must be deterministic in
// (client, t, params) for the outer iteration to have a fixed point to find.
using StepGradientFn = std::function<ParamVector(int client, int t, const ParamVector& params)>;

struct FixedPointOptions {
    int T = 1;
    double eps1 = 1e-3;
    double eps2 = 1e-3;
    int max_outer = 200;
    RateSolveConfig rate;
    double eta_init = 0.0;
};

// Iterative computation of the estimator fixed point. Each outer sweep
// simulates the single-step dynamics w_i(t+1) = phi1(t) - eta_i(t) *
// grad_i(phi1(t)) for all clients and steps, propagating the freshly
// aggregated phi1 forward within the sweep while the rates read phi2 from the
// previous sweep. Convergence requires the max-abs phi1 gap and the abs phi2
// gap to fall below (eps1, eps2) simultaneously; on convergence the trajectory
// keeps the pre-sweep estimates so that replaying the dynamics against them
// reproduces the recorded gaps.
MeanFieldTrajectory fixed_point(const std::vector<double>& theta, const ParamVector& w0,
                                const StepGradientFn& grad_fn, const FixedPointOptions& options);

// Trajectory container format, bit-exact: magic "MFT1"; little-endian
// unsigned 32-bit d, N, T, K, converged flag; (T+1) blocks of d little-endian
// 64-bit reals (phi1); (T+1) 64-bit reals (phi2); N*T 64-bit reals (eta,
// row-major by client). beta is not persisted and must be supplied by the
// consumer's configuration.
void save_trajectory(const MeanFieldTrajectory& trajectory, const std::string& path);
MeanFieldTrajectory load_trajectory(const std::string& path);

}  // namespace fedent
