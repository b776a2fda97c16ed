#include "core/analysis.hpp"

#include <cmath>

namespace fedent {

namespace {
constexpr double kSlack = 1e-9;
}

BoundReport make_bound_report(BoundName name, int round, double lhs, double rhs) {
    BoundReport report;
    report.name = name;
    report.round = round;
    report.lhs = lhs;
    report.rhs = rhs;
    report.satisfied = lhs <= rhs + kSlack;
    return report;
}

std::vector<double> drift(const ParamVector& global_w, const std::vector<ParamVector>& locals) {
    std::vector<double> out;
    out.reserve(locals.size());
    for (const ParamVector& local : locals) {
        check_same_length(global_w, local, "drift");
        double acc = 0.0;
        for (std::size_t k = 0; k < global_w.size(); ++k) {
            double diff = global_w[k] - local[k];
            acc += diff * diff;
        }
        out.push_back(std::sqrt(acc));
    }
    return out;
}

double drift_bound_G(const std::vector<double>& theta, double beta, double d_bound,
                     double phi1_prev_norm, double phi2_t) {
    if (!(phi2_t > 0.0)) fail(ErrorKind::invalid_argument, "drift_bound_G: phi2 must be positive");
    double total = 0.0;
    for (double th : theta) {
        total += 2.0 * beta * th * th * d_bound * d_bound * phi1_prev_norm /
                 ((1.0 - beta) * phi2_t);
    }
    return total;
}

double round_gap_bound(const std::vector<double>& theta, double beta, double d_bound,
                       double phi1_norm, double phi2_next,
                       const std::vector<double>* per_client_grad_norms) {
    if (!(phi2_next > 0.0)) fail(ErrorKind::invalid_argument, "round_gap_bound: phi2 must be positive");
    if (per_client_grad_norms && per_client_grad_norms->size() != theta.size()) {
        fail(ErrorKind::invalid_argument, "round_gap_bound: gradient norms do not align with clients");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double g = per_client_grad_norms ? (*per_client_grad_norms)[i] : d_bound;
        total += 2.0 * beta * theta[i] * theta[i] * d_bound * phi1_norm * g /
                 ((1.0 - beta) * phi2_next);
    }
    return total;
}

double loss_decrease_rhs(const std::vector<double>& theta, double beta, double lipschitz,
                         double d_bound, double phi1_norm, double phi2_next,
                         const std::vector<double>* per_client_grad_norms) {
    double gap = round_gap_bound(theta, beta, d_bound, phi1_norm, phi2_next, per_client_grad_norms);
    return 0.5 * lipschitz * gap * gap - d_bound;
}

BoundReport loss_decrease_check(double f_t, double f_next, double bound_rhs, int round) {
    return make_bound_report(BoundName::loss_decrease, round, f_next - f_t, bound_rhs);
}

double kappa(double beta, double lipschitz, double delta, double d_bound, double phi1_norm,
             double phi2_next) {
    if (!(phi2_next > 0.0)) fail(ErrorKind::invalid_argument, "kappa: phi2 must be positive");
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::invalid_argument, "kappa: beta must lie in (0,1)");
    double factor = 1.0 + 1.0 / (1.0 - beta);
    return 1.0 - factor * 4.0 * lipschitz * delta * d_bound * d_bound * phi1_norm * phi1_norm /
                     (phi2_next * phi2_next);
}

double estimate_pl_delta(const std::vector<std::pair<double, double>>& loss_and_grad_norm,
                         double f_star_proxy) {
    bool found = false;
    double best = 0.0;
    for (const auto& [loss_value, grad_norm] : loss_and_grad_norm) {
        double gap = loss_value - f_star_proxy;
        if (gap <= 1e-12) continue;  // record sits at the proxy optimum
        double value = grad_norm * grad_norm / (2.0 * gap);
        if (!found || value < best) {
            best = value;
            found = true;
        }
    }
    if (!found) {
        fail(ErrorKind::numeric, "estimate_pl_delta: trajectory at optimum, no eligible record");
    }
    return best;
}

}  // namespace fedent
