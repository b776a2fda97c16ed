// Command-line front end for the fedent shared library. Talks to the core
// exclusively through the C API in fedent/fedent.h.

#include <cinttypes>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedent/fedent.h"

namespace {

struct CommonOptions {
    std::string config_path;
    bool has_seed = false;
    std::uint64_t seed = 0;
    std::string output_dir;
};

void add_common(CLI::App* cmd, CommonOptions& options) {
    cmd->add_option("--config", options.config_path, "experiment configuration file")->required();
    cmd->add_option("--seed", options.seed, "override the config's seed list with one seed")
        ->each([&](const std::string&) { options.has_seed = true; });
    cmd->add_option("--output", options.output_dir, "override the output directory");
}

using ExperimentPtr = std::unique_ptr<fedent_experiment, decltype(&fedent_experiment_close)>;

// Opens the experiment and applies overrides; on failure prints the error and
// leaves the pointer empty.
ExperimentPtr open_experiment(const CommonOptions& options) {
    fedent_experiment* raw = nullptr;
    if (fedent_experiment_open(options.config_path.c_str(), &raw) != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
        return ExperimentPtr(nullptr, &fedent_experiment_close);
    }
    ExperimentPtr experiment(raw, &fedent_experiment_close);
    if (options.has_seed &&
        fedent_experiment_override_seed(experiment.get(), options.seed) != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
        return ExperimentPtr(nullptr, &fedent_experiment_close);
    }
    if (!options.output_dir.empty() &&
        fedent_experiment_override_output_dir(experiment.get(), options.output_dir.c_str()) != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
        return ExperimentPtr(nullptr, &fedent_experiment_close);
    }
    return experiment;
}

int exit_code_for(fedent_status status) {
    switch (status) {
        case FEDENT_OK:
            return 0;
        case FEDENT_ERR_NOT_CONVERGED:
            return 2;
        default:
            return 1;
    }
}

int run_precompute(const CommonOptions& options) {
    ExperimentPtr experiment = open_experiment(options);
    if (!experiment) return 1;
    std::vector<fedent_trajectory_info> infos(fedent_experiment_seed_count(experiment.get()));
    size_t count = 0;
    fedent_status status = fedent_precompute(experiment.get(), infos.data(), infos.size(), &count);
    for (size_t i = 0; i < count && i < infos.size(); ++i) {
        const fedent_trajectory_info& info = infos[i];
        std::printf("seed %" PRIu64 ": K=%d converged=%s gap_phi1=%.6g gap_phi2=%.6g -> %s\n",
                    info.seed, info.outer_iterations, info.converged ? "true" : "false", info.gap_phi1,
                    info.gap_phi2, info.path);
    }
    if (status == FEDENT_ERR_NOT_CONVERGED) {
        std::fprintf(stderr, "warning: %s\n", fedent_last_error());
    } else if (status != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
    }
    return exit_code_for(status);
}

int run_run(const CommonOptions& options) {
    ExperimentPtr experiment = open_experiment(options);
    if (!experiment) return 1;
    std::vector<fedent_run_info> infos(fedent_experiment_run_count(experiment.get()));
    size_t count = 0;
    fedent_status status = fedent_run(experiment.get(), infos.data(), infos.size(), &count);
    if (status != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
        return exit_code_for(status);
    }
    for (size_t i = 0; i < count && i < infos.size(); ++i) {
        const fedent_run_info& info = infos[i];
        std::printf("%s seed %" PRIu64 ": final_accuracy=%.4f final_train_loss=%.6f "
                    "eta_bound_violations=%d -> %s\n",
                    info.algorithm, info.seed, info.final_accuracy, info.final_train_loss,
                    info.eta_bound_violations, info.metrics_path);
    }
    return 0;
}

int run_inspect(const CommonOptions& options) {
    ExperimentPtr experiment = open_experiment(options);
    if (!experiment) return 1;
    char path[512] = {0};
    fedent_status status = fedent_inspect_partition(experiment.get(), path, sizeof(path));
    if (status != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
        return exit_code_for(status);
    }
    std::printf("partition histogram -> %s\n", path);
    return 0;
}

int run_estimate_bounds(const CommonOptions& options) {
    ExperimentPtr experiment = open_experiment(options);
    if (!experiment) return 1;
    fedent_bounds_report report{};
    fedent_status status = fedent_estimate_bounds(experiment.get(), &report);
    if (status != FEDENT_OK) {
        std::fprintf(stderr, "error: %s\n", fedent_last_error());
        return exit_code_for(status);
    }
    std::printf("D_hat=%.6g L_hat=%.6g trials=%d\n", report.d_hat, report.l_hat, report.trials);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fedent: entropy-driven adaptive federated-learning laboratory"};
    app.require_subcommand(1);

    CommonOptions precompute_opts;
    CLI::App* precompute = app.add_subcommand(
        "precompute", "compute the mean-field fixed point and write the trajectory file");
    add_common(precompute, precompute_opts);

    CommonOptions run_opts;
    CLI::App* run = app.add_subcommand("run", "run the configured experiments and write metrics");
    add_common(run, run_opts);

    CommonOptions inspect_opts;
    CLI::App* inspect =
        app.add_subcommand("inspect-partition", "write the per-client label histogram CSV");
    add_common(inspect, inspect_opts);

    CommonOptions bounds_opts;
    CLI::App* bounds =
        app.add_subcommand("estimate-bounds", "probe empirical D and L for the configured model");
    add_common(bounds, bounds_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (precompute->parsed()) return run_precompute(precompute_opts);
    if (run->parsed()) return run_run(run_opts);
    if (inspect->parsed()) return run_inspect(inspect_opts);
    if (bounds->parsed()) return run_estimate_bounds(bounds_opts);
    return 1;
}
