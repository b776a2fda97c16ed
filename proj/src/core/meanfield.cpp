#include "core/meanfield.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fedent {

namespace {

constexpr double kMassFloor = 1e-30;
constexpr double kShareFloor = 1e-30;
constexpr char kMagic[4] = {'M', 'F', 'T', '1'};

void write_u32_le(std::ostream& out, std::uint32_t value) {
    unsigned char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_f64_le(std::ostream& out, double value) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) fail(ErrorKind::io, path + ": truncated trajectory");
    std::uint32_t value = 0;
    for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return value;
}

double read_f64_le(std::istream& in, const std::string& path) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorKind::io, path + ": truncated trajectory");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

double weighted_norm_sq(const std::vector<double>& theta, const std::vector<ParamVector>& locals) {
    double total = 0.0;
    for (std::size_t i = 0; i < locals.size(); ++i) {
        total += theta[i] * l2norm_sq(locals[i]);
    }
    return total;
}

}  // namespace

EntropyShares entropy_shares(const std::vector<ParamVector>& local_params,
                             const std::vector<double>& theta, std::optional<double> phi2) {
    if (local_params.empty() || local_params.size() != theta.size()) {
        fail(ErrorKind::invalid_argument, "entropy_shares: clients and weights must align and be nonempty");
    }
    for (std::size_t i = 1; i < local_params.size(); ++i) {
        check_same_length(local_params[0], local_params[i], "entropy_shares");
    }
    double denom = phi2 ? *phi2 : weighted_norm_sq(theta, local_params);
    if (!(denom >= kMassFloor)) {
        fail(ErrorKind::numeric, "entropy_shares: degenerate parameter mass (denominator below 1e-30)");
    }
    EntropyShares shares;
    shares.p.resize(local_params.size());
    for (std::size_t i = 0; i < local_params.size(); ++i) {
        double raw = theta[i] * l2norm_sq(local_params[i]) / denom;
        shares.p[i] = std::clamp(raw, 0.0, 1.0);
    }
    return shares;
}

double system_entropy(const EntropyShares& shares) {
    double total = 0.0;
    for (double p : shares.p) {
        if (p > 0.0) total += p * std::log(p);
    }
    return total;
}

double lr_upper_bound(double theta_i, double beta, double d_bound, double phi1_norm, double phi2_next) {
    if (!(phi2_next > 0.0)) fail(ErrorKind::invalid_argument, "lr_upper_bound: phi2_next must be positive");
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::invalid_argument, "lr_upper_bound: beta must lie in (0,1)");
    return 2.0 * beta * theta_i * d_bound * phi1_norm / ((1.0 - beta) * phi2_next);
}

double decay_lr(double eta_prev, double eta_new, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        fail(ErrorKind::invalid_argument, "decay_lr: gamma must lie in [0,1]");
    }
    return gamma * eta_prev + (1.0 - gamma) * eta_new;
}

RateSolution solve_learning_rate_scalars(double theta_i, double grad_phi1, double grad_sq,
                                         double phi1_sq, double phi2_next, const RateSolveConfig& cfg,
                                         double eta_init) {
    if (!(phi2_next > 0.0)) {
        fail(ErrorKind::invalid_argument, "solve_learning_rate: phi2_next must be positive");
    }
    if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) {
        fail(ErrorKind::invalid_argument, "solve_learning_rate: beta must lie in (0,1)");
    }
    RateSolution solution;
    if (grad_sq == 0.0) {
        return solution;  // zero numerator, eta = 0
    }

    double grad_norm = std::sqrt(grad_sq);
    double phi1_norm = std::sqrt(std::max(phi1_sq, 0.0));
    // Gradient-norm form of the upper bound; tighter than the D-form for any
    // admissible D >= |grad|.
    double bound = 2.0 * cfg.beta * theta_i * grad_norm * phi1_norm / ((1.0 - cfg.beta) * phi2_next);

    double eta = std::clamp(eta_init, 0.0, bound);
    for (int iter = 1; iter <= cfg.inner_max_iters; ++iter) {
        // Share of the post-step parameters w_next = phi1 - eta * grad.
        double w_next_sq = std::max(phi1_sq - 2.0 * eta * grad_phi1 + eta * eta * grad_sq, 0.0);
        double p = std::clamp(theta_i * w_next_sq / phi2_next, kShareFloor, 1.0);
        double a = cfg.beta * theta_i * (1.0 + std::log(p));
        double denom = (1.0 - cfg.beta) * phi2_next + a * grad_sq;
        // denom <= 0 is the far side of the rearranged equation's pole, where
        // the only stationary points left inflate the parameter norm; the
        // non-negativity clamp binds there and the candidate is zero.
        double candidate = denom > 0.0 ? std::clamp(a * grad_phi1 / denom, 0.0, bound) : 0.0;

        double next = (1.0 - cfg.damping) * eta + cfg.damping * candidate;
        solution.iterations = iter;
        if (std::abs(next - eta) <= cfg.inner_tol) {
            solution.eta = next;
            return solution;
        }
        eta = next;
    }
    solution.eta = eta;
    solution.converged = false;
    return solution;
}

RateSolution solve_learning_rate(double theta_i, const ParamVector& grad, const ParamVector& phi1_t,
                                 double phi2_next, const RateSolveConfig& cfg, double eta_init) {
    check_same_length(grad, phi1_t, "solve_learning_rate");
    return solve_learning_rate_scalars(theta_i, dot(grad, phi1_t), l2norm_sq(grad), l2norm_sq(phi1_t),
                                       phi2_next, cfg, eta_init);
}

MeanFieldTrajectory fixed_point(const std::vector<double>& theta, const ParamVector& w0,
                                const StepGradientFn& grad_fn, const FixedPointOptions& options) {
    if (options.T < 1) fail(ErrorKind::invalid_argument, "fixed_point: T must be >= 1");
    if (!(options.eps1 > 0.0 && options.eps2 > 0.0)) {
        fail(ErrorKind::invalid_argument, "fixed_point: eps1 and eps2 must be positive");
    }
    if (theta.empty()) fail(ErrorKind::invalid_argument, "fixed_point: no clients");
    if (w0.empty()) fail(ErrorKind::invalid_argument, "fixed_point: empty initial parameters");

    const int num_clients = static_cast<int>(theta.size());
    const int T = options.T;
    const std::size_t d = w0.size();

    MeanFieldTrajectory traj;
    traj.d = static_cast<int>(d);
    traj.num_clients = num_clients;
    traj.T = T;
    traj.beta = options.rate.beta;

    // All clients start from the shared w0, so the t = 0 aggregates are fixed
    // across sweeps.
    ParamVector phi1_0(d, 0.0);
    for (int i = 0; i < num_clients; ++i) {
        axpy_inplace(theta[static_cast<std::size_t>(i)], w0, phi1_0);
    }
    double phi2_0 = 0.0;
    for (int i = 0; i < num_clients; ++i) {
        phi2_0 += theta[static_cast<std::size_t>(i)] * l2norm_sq(w0);
    }
    if (phi2_0 < kMassFloor) {
        phi2_0 = kMassFloor;
        traj.phi2_floored = true;
    }

    std::vector<ParamVector> cur_phi1(static_cast<std::size_t>(T) + 1, phi1_0);
    std::vector<double> cur_phi2(static_cast<std::size_t>(T) + 1, phi2_0);
    std::vector<std::vector<double>> prev_eta(static_cast<std::size_t>(num_clients),
                                              std::vector<double>(static_cast<std::size_t>(T), options.eta_init));

    std::vector<ParamVector> new_phi1(static_cast<std::size_t>(T) + 1);
    std::vector<double> new_phi2(static_cast<std::size_t>(T) + 1);
    std::vector<std::vector<double>> new_eta = prev_eta;
    std::vector<ParamVector> locals(static_cast<std::size_t>(num_clients));

    for (int k = 1; k <= options.max_outer; ++k) {
        traj.outer_iterations = k;
        new_phi1[0] = phi1_0;
        new_phi2[0] = phi2_0;
        int sweep_warnings = 0;

        for (int t = 0; t < T; ++t) {
            const ParamVector& anchor = new_phi1[static_cast<std::size_t>(t)];
            for (int i = 0; i < num_clients; ++i) {
                ParamVector grad = grad_fn(i, t, anchor);
                if (grad.size() != d) {
                    fail(ErrorKind::invalid_argument, "fixed_point: gradient dimension mismatch");
                }
                if (!all_finite(grad)) {
                    fail(ErrorKind::numeric, "fixed_point: non-finite gradient at outer iteration " +
                                                 std::to_string(k) + ", step " + std::to_string(t) +
                                                 ", client " + std::to_string(i));
                }
                RateSolution sol = solve_learning_rate(
                    theta[static_cast<std::size_t>(i)], grad, anchor,
                    cur_phi2[static_cast<std::size_t>(t) + 1], options.rate,
                    prev_eta[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]);
                if (!sol.converged) ++sweep_warnings;
                new_eta[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)] = sol.eta;
                locals[static_cast<std::size_t>(i)] = axpy(-sol.eta, grad, anchor);
                if (!all_finite(locals[static_cast<std::size_t>(i)])) {
                    fail(ErrorKind::numeric, "fixed_point: non-finite parameters at outer iteration " +
                                                 std::to_string(k) + ", step " + std::to_string(t) +
                                                 ", client " + std::to_string(i));
                }
            }
            ParamVector& agg = new_phi1[static_cast<std::size_t>(t) + 1];
            agg.assign(d, 0.0);
            double mass = 0.0;
            for (int i = 0; i < num_clients; ++i) {
                axpy_inplace(theta[static_cast<std::size_t>(i)], locals[static_cast<std::size_t>(i)], agg);
                mass += theta[static_cast<std::size_t>(i)] * l2norm_sq(locals[static_cast<std::size_t>(i)]);
            }
            if (mass < kMassFloor) {
                mass = kMassFloor;
                traj.phi2_floored = true;
            }
            new_phi2[static_cast<std::size_t>(t) + 1] = mass;
        }

        double gap1 = 0.0;
        double gap2 = 0.0;
        for (int t = 0; t <= T; ++t) {
            const ParamVector& a = new_phi1[static_cast<std::size_t>(t)];
            const ParamVector& b = cur_phi1[static_cast<std::size_t>(t)];
            for (std::size_t c = 0; c < d; ++c) {
                gap1 = std::max(gap1, std::abs(a[c] - b[c]));
            }
            gap2 = std::max(gap2, std::abs(new_phi2[static_cast<std::size_t>(t)] -
                                           cur_phi2[static_cast<std::size_t>(t)]));
        }
        traj.final_gap1 = gap1;
        traj.final_gap2 = gap2;
        traj.rate_solver_warnings += sweep_warnings;

        if (gap1 < options.eps1 && gap2 < options.eps2) {
            // Keep the pre-sweep estimates: the rates in new_eta were solved
            // against them, so replaying the dynamics lands within the
            // recorded gaps of the stored trajectory.
            traj.converged = true;
            traj.phi1 = cur_phi1;
            traj.phi2 = cur_phi2;
            traj.eta = new_eta;
            return traj;
        }
        cur_phi1 = new_phi1;
        cur_phi2 = new_phi2;
        prev_eta = new_eta;
    }

    traj.converged = false;
    traj.phi1 = cur_phi1;
    traj.phi2 = cur_phi2;
    traj.eta = new_eta;
    return traj;
}

void save_trajectory(const MeanFieldTrajectory& trajectory, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, path + ": cannot open for writing");
    out.write(kMagic, 4);
    write_u32_le(out, static_cast<std::uint32_t>(trajectory.d));
    write_u32_le(out, static_cast<std::uint32_t>(trajectory.num_clients));
    write_u32_le(out, static_cast<std::uint32_t>(trajectory.T));
    write_u32_le(out, static_cast<std::uint32_t>(trajectory.outer_iterations));
    write_u32_le(out, trajectory.converged ? 1u : 0u);
    for (const ParamVector& block : trajectory.phi1) {
        for (double v : block) write_f64_le(out, v);
    }
    for (double v : trajectory.phi2) write_f64_le(out, v);
    for (const std::vector<double>& row : trajectory.eta) {
        for (double v : row) write_f64_le(out, v);
    }
    if (!out) fail(ErrorKind::io, path + ": write failed");
}

MeanFieldTrajectory load_trajectory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, path + ": cannot open");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        fail(ErrorKind::io, path + ": bad magic, not a trajectory file");
    }
    MeanFieldTrajectory traj;
    traj.d = static_cast<int>(read_u32_le(in, path));
    traj.num_clients = static_cast<int>(read_u32_le(in, path));
    traj.T = static_cast<int>(read_u32_le(in, path));
    traj.outer_iterations = static_cast<int>(read_u32_le(in, path));
    traj.converged = read_u32_le(in, path) != 0;
    if (traj.d <= 0 || traj.num_clients <= 0 || traj.T <= 0) {
        fail(ErrorKind::io, path + ": invalid trajectory header");
    }
    traj.beta = std::numeric_limits<double>::quiet_NaN();  // not persisted
    traj.phi1.assign(static_cast<std::size_t>(traj.T) + 1, ParamVector(static_cast<std::size_t>(traj.d)));
    for (ParamVector& block : traj.phi1) {
        for (double& v : block) v = read_f64_le(in, path);
    }
    traj.phi2.resize(static_cast<std::size_t>(traj.T) + 1);
    for (double& v : traj.phi2) v = read_f64_le(in, path);
    traj.eta.assign(static_cast<std::size_t>(traj.num_clients),
                    std::vector<double>(static_cast<std::size_t>(traj.T)));
    for (std::vector<double>& row : traj.eta) {
        for (double& v : row) v = read_f64_le(in, path);
    }
    for (double v : traj.phi2) {
        if (!(v > 0.0)) fail(ErrorKind::io, path + ": trajectory phi2 must be positive");
    }
    return traj;
}

}  // namespace fedent
