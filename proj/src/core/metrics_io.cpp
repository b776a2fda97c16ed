#include "core/metrics_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fedent {

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

void ensure_parent_dir(const std::string& path) {
    std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        if (ec) fail(ErrorKind::io, "cannot create directory " + parent.string() + ": " + ec.message());
    }
}

void write_metrics_csv(const std::string& path, Algorithm algorithm, std::uint64_t seed,
                       const RunHistory& history) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, path + ": cannot open for writing");
    out << "round,algorithm,seed,train_loss,test_accuracy,mean_eta,entropy,max_drift,drift_bound,"
           "eta_bound_violations\n";
    for (const RoundRecord& record : history.rounds) {
        out << record.round << ',' << algorithm_name(algorithm) << ',' << seed << ','
            << format_double(record.train_loss) << ',' << format_double(record.test_accuracy) << ','
            << format_double(record.mean_eta) << ',' << format_double(record.entropy) << ','
            << format_double(record.max_drift) << ',' << format_double(record.drift_bound) << ','
            << record.eta_bound_violations << '\n';
    }
    if (!out) fail(ErrorKind::io, path + ": write failed");
}

void write_partition_csv(const std::string& path, const LabeledDataset& dataset,
                         const std::vector<ClientPartition>& parts) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, path + ": cannot open for writing");
    out << "client_id,class,count\n";
    std::vector<std::vector<std::uint64_t>> hist = label_histograms(dataset, parts);
    for (std::size_t i = 0; i < hist.size(); ++i) {
        for (std::size_t m = 0; m < hist[i].size(); ++m) {
            out << parts[i].client_id << ',' << m << ',' << hist[i][m] << '\n';
        }
    }
    if (!out) fail(ErrorKind::io, path + ": write failed");
}

void write_summary_json(const std::string& path, const std::vector<RunResult>& results,
                        double runtime_seconds) {
    ensure_parent_dir(path);
    nlohmann::json root;
    root["runtime_seconds"] = runtime_seconds;
    nlohmann::json runs = nlohmann::json::array();
    for (const RunResult& result : results) {
        nlohmann::json entry;
        entry["algorithm"] = algorithm_name(result.algorithm);
        entry["seed"] = result.seed;
        entry["rounds"] = result.history.rounds.size();
        entry["final_accuracy"] = result.history.final_accuracy;
        entry["final_train_loss"] = result.history.final_train_loss;
        entry["eta_bound_violations"] = result.history.total_eta_violations;
        entry["metrics_csv"] = result.metrics_path;
        runs.push_back(entry);
    }
    root["runs"] = runs;
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, path + ": cannot open for writing");
    out << root.dump(2) << '\n';
    if (!out) fail(ErrorKind::io, path + ": write failed");
}

}  // namespace fedent
