#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/engine.hpp"

namespace fedent {

enum class DatasetSource { synthetic, idx };

struct DatasetConfig {
    DatasetSource source = DatasetSource::synthetic;
    // idx
    std::string train_images = "train-images-idx3-ubyte";
    std::string train_labels = "train-labels-idx1-ubyte";
    std::string test_images = "t10k-images-idx3-ubyte";
    std::string test_labels = "t10k-labels-idx1-ubyte";
    int train_limit = 0;  // 0 = all
    int test_limit = 0;
    // synthetic
    int num_classes = 2;
    int per_class = 100;
    int test_per_class = 50;
    int input_dim = 2;
    double separation = 4.0;
    double feature_scale = 1.0;  // multiplies generated features, e.g. to mimic pixel norms
    std::uint64_t seed = 0;
};

struct PathsConfig {
    std::string dataset_dir = "data";
    std::string trajectory_path;  // default: <output_dir>/trajectory.mft
    std::string output_dir = "out";
};

// Parsed experiment file: one base TrainingConfig plus the algorithm/seed
// grid to run it over.
struct ExperimentConfig {
    TrainingConfig base;
    std::vector<Algorithm> algorithms;
    std::vector<std::uint64_t> seeds;
    DatasetConfig dataset;
    PathsConfig paths;

    std::string trajectory_path_for_seed(std::uint64_t seed) const;
};

// Strict parse: unknown keys are rejected with their path, defaults are
// documented in the README. Throws Error(config/io).
ExperimentConfig parse_experiment_file(const std::string& path);
ExperimentConfig parse_experiment_text(const std::string& text, const std::string& origin);

// Materializes the train/test datasets named by the config.
void load_datasets(const ExperimentConfig& config, LabeledDataset& train, LabeledDataset& test);

}  // namespace fedent
