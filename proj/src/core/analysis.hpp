#pragma once

#include <string>
#include <vector>

#include "core/numerics.hpp"

namespace fedent {

enum class BoundName { round_gap, drift, loss_decrease, rate_factor };

struct BoundReport {
    int round = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool satisfied = false;
    BoundName name = BoundName::round_gap;
};

BoundReport make_bound_report(BoundName name, int round, double lhs, double rhs);

// Per-client ||global_w - w_i||.
std::vector<double> drift(const ParamVector& global_w, const std::vector<ParamVector>& locals);

// G = sum_j 2 * beta * theta_j^2 * D^2 * |phi1(t-1)| / ((1 - beta) * phi2(t)),
// the bound on the client drift at step t.
double drift_bound_G(const std::vector<double>& theta, double beta, double d_bound,
                     double phi1_prev_norm, double phi2_t);

// Round-gap bound on |w(t+1) - w(t)|:
// sum_i 2 * beta * theta_i^2 * D * |phi1(t)| * g_i / ((1 - beta) * phi2(t+1)),
// with g_i the client gradient norm (tight form) or D when absent (loose form).
double round_gap_bound(const std::vector<double>& theta, double beta, double d_bound,
                       double phi1_norm, double phi2_next,
                       const std::vector<double>* per_client_grad_norms);

// Per-round loss-decrease bound: F(w(t+1)) - F(w(t)) <= (L/2) * [round-gap bound]^2 - D.
double loss_decrease_rhs(const std::vector<double>& theta, double beta, double lipschitz,
                         double d_bound, double phi1_norm, double phi2_next,
                         const std::vector<double>* per_client_grad_norms);
BoundReport loss_decrease_check(double f_t, double f_next, double bound_rhs, int round);

// Convergence-rate factor
// kappa(t) = 1 - (1 + 1/(1-beta)) * 4 * L * delta * D^2 * |phi1(t)|^2 / phi2(t+1)^2.
// Reported as a diagnostic curve; may be negative or exceed 1 with loose
// estimates and is never asserted.
double kappa(double beta, double lipschitz, double delta, double d_bound, double phi1_norm,
             double phi2_next);

// Empirical Polyak-Lojasiewicz constant from a trajectory of
// (loss, gradient-norm) records against a proxy for F*:
// min over records of |grad|^2 / (2 (F - F*)), skipping records at the proxy.
double estimate_pl_delta(const std::vector<std::pair<double, double>>& loss_and_grad_norm,
                         double f_star_proxy);

}  // namespace fedent
