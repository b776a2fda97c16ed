#include "core/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fedent {

namespace {

using nlohmann::json;

void require_keys(const json& object, const std::string& where, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : object.items()) {
        if (!allowed.contains(key)) {
            fail(ErrorKind::config, "unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const json& object, const std::string& key, T fallback) {
    if (!object.contains(key)) return fallback;
    try {
        return object.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::config, "field '" + key + "': " + e.what());
    }
}

template <typename T>
T get_required(const json& object, const std::string& key, const std::string& where) {
    if (!object.contains(key)) {
        fail(ErrorKind::config, "missing required field '" + key + "' in " + where);
    }
    try {
        return object.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::config, "field '" + key + "': " + e.what());
    }
}

ModelSpec parse_model(const json& object) {
    require_keys(object, "model", {"kind", "input_dim", "hidden_dims", "num_classes"});
    ModelSpec spec;
    std::string kind = get_required<std::string>(object, "kind", "model");
    if (kind == "softmax_regression") {
        spec.kind = ModelKind::softmax_regression;
    } else if (kind == "mlp") {
        spec.kind = ModelKind::mlp;
    } else {
        fail(ErrorKind::config, "model.kind must be 'softmax_regression' or 'mlp', got '" + kind + "'");
    }
    spec.input_dim = get_required<int>(object, "input_dim", "model");
    spec.num_classes = get_required<int>(object, "num_classes", "model");
    spec.hidden_dims = get_or<std::vector<int>>(object, "hidden_dims", {});
    validate_model_spec(spec);
    return spec;
}

PartitionSpec parse_partition(const json& object) {
    require_keys(object, "partition", {"scheme", "num_clients", "alpha_d", "shards_per_client", "seed"});
    PartitionSpec spec;
    std::string scheme = get_required<std::string>(object, "scheme", "partition");
    if (scheme == "iid") {
        spec.scheme = PartitionScheme::iid;
    } else if (scheme == "dirichlet") {
        spec.scheme = PartitionScheme::dirichlet;
    } else if (scheme == "pathological") {
        spec.scheme = PartitionScheme::pathological;
    } else {
        fail(ErrorKind::config, "partition.scheme must be iid, dirichlet, or pathological");
    }
    spec.num_clients = get_required<int>(object, "num_clients", "partition");
    if (spec.scheme == PartitionScheme::dirichlet) {
        spec.alpha_d = get_required<double>(object, "alpha_d", "partition");
    } else if (object.contains("alpha_d")) {
        fail(ErrorKind::config, "partition.alpha_d is only valid for the dirichlet scheme");
    }
    if (spec.scheme == PartitionScheme::pathological) {
        spec.shards_per_client = get_required<int>(object, "shards_per_client", "partition");
    } else if (object.contains("shards_per_client")) {
        fail(ErrorKind::config, "partition.shards_per_client is only valid for the pathological scheme");
    }
    spec.seed = get_or<std::uint64_t>(object, "seed", 0);
    return spec;
}

DatasetConfig parse_dataset(const json& object) {
    require_keys(object, "dataset",
                 {"source", "train_images", "train_labels", "test_images", "test_labels", "train_limit",
                  "test_limit", "num_classes", "per_class", "test_per_class", "input_dim", "separation",
                  "feature_scale", "seed"});
    DatasetConfig config;
    std::string source = get_required<std::string>(object, "source", "dataset");
    if (source == "synthetic") {
        config.source = DatasetSource::synthetic;
    } else if (source == "idx") {
        config.source = DatasetSource::idx;
    } else {
        fail(ErrorKind::config, "dataset.source must be 'synthetic' or 'idx'");
    }
    config.train_images = get_or<std::string>(object, "train_images", config.train_images);
    config.train_labels = get_or<std::string>(object, "train_labels", config.train_labels);
    config.test_images = get_or<std::string>(object, "test_images", config.test_images);
    config.test_labels = get_or<std::string>(object, "test_labels", config.test_labels);
    config.train_limit = get_or<int>(object, "train_limit", 0);
    config.test_limit = get_or<int>(object, "test_limit", 0);
    config.num_classes = get_or<int>(object, "num_classes", config.num_classes);
    config.per_class = get_or<int>(object, "per_class", config.per_class);
    config.test_per_class = get_or<int>(object, "test_per_class", config.test_per_class);
    config.input_dim = get_or<int>(object, "input_dim", config.input_dim);
    config.separation = get_or<double>(object, "separation", config.separation);
    config.feature_scale = get_or<double>(object, "feature_scale", 1.0);
    if (config.source == DatasetSource::idx && config.feature_scale != 1.0) {
        fail(ErrorKind::config, "dataset.feature_scale applies to synthetic datasets only");
    }
    config.seed = get_or<std::uint64_t>(object, "seed", 0);
    return config;
}

AlgoParams parse_algo_params(const json& object) {
    require_keys(object, "algo_params", {"mu", "alpha", "beta1", "beta2", "tau", "server_lr"});
    AlgoParams params;
    params.mu = get_or<double>(object, "mu", params.mu);
    params.alpha = get_or<double>(object, "alpha", params.alpha);
    params.beta1 = get_or<double>(object, "beta1", params.beta1);
    params.beta2 = get_or<double>(object, "beta2", params.beta2);
    params.tau = get_or<double>(object, "tau", params.tau);
    params.server_lr = get_or<double>(object, "server_lr", params.server_lr);
    return params;
}

PathsConfig parse_paths(const json& object) {
    require_keys(object, "paths", {"dataset_dir", "trajectory_path", "output_dir"});
    PathsConfig paths;
    paths.dataset_dir = get_or<std::string>(object, "dataset_dir", paths.dataset_dir);
    paths.output_dir = get_or<std::string>(object, "output_dir", paths.output_dir);
    paths.trajectory_path = get_or<std::string>(object, "trajectory_path", "");
    if (paths.trajectory_path.empty()) {
        paths.trajectory_path = paths.output_dir + "/trajectory.mft";
    }
    return paths;
}

}  // namespace

std::string ExperimentConfig::trajectory_path_for_seed(std::uint64_t seed) const {
    if (seeds.size() <= 1) return paths.trajectory_path;
    std::string path = paths.trajectory_path;
    std::string suffix = "_seed" + std::to_string(seed);
    std::size_t dot = path.find_last_of('.');
    std::size_t slash = path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) {
        return path + suffix;
    }
    return path.substr(0, dot) + suffix + path.substr(dot);
}

ExperimentConfig parse_experiment_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, origin + ": " + e.what());
    }
    if (!root.is_object()) fail(ErrorKind::config, origin + ": top level must be an object");
    require_keys(root, origin,
                 {"algorithm", "model", "dataset", "partition", "rounds", "local_epochs", "batch_size",
                  "base_lr", "beta", "gamma", "sample_fraction", "seed", "seeds", "algo_params",
                  "fixed_point", "paths", "bounds_probe"});

    ExperimentConfig config;

    const json& algo_field = root.contains("algorithm")
                                 ? root.at("algorithm")
                                 : (fail(ErrorKind::config, "missing required field 'algorithm'"), root);
    if (algo_field.is_string()) {
        config.algorithms.push_back(algorithm_from_name(algo_field.get<std::string>()));
    } else if (algo_field.is_array()) {
        for (const json& entry : algo_field) {
            config.algorithms.push_back(algorithm_from_name(entry.get<std::string>()));
        }
    } else {
        fail(ErrorKind::config, "'algorithm' must be a string or an array of strings");
    }
    if (config.algorithms.empty()) fail(ErrorKind::config, "'algorithm' must name at least one algorithm");

    if (!root.contains("model")) fail(ErrorKind::config, "missing required field 'model'");
    config.base.model = parse_model(root.at("model"));
    if (!root.contains("dataset")) fail(ErrorKind::config, "missing required field 'dataset'");
    config.dataset = parse_dataset(root.at("dataset"));
    if (!root.contains("partition")) fail(ErrorKind::config, "missing required field 'partition'");
    config.base.partition = parse_partition(root.at("partition"));

    config.base.rounds = get_or<int>(root, "rounds", 10);
    config.base.local_epochs = get_or<int>(root, "local_epochs", 1);
    config.base.batch_size = get_or<int>(root, "batch_size", 32);
    config.base.base_lr = get_or<double>(root, "base_lr", 0.01);
    config.base.beta = get_or<double>(root, "beta", 0.99);
    config.base.gamma = get_or<double>(root, "gamma", 0.99);
    config.base.sample_fraction = get_or<double>(root, "sample_fraction", 1.0);

    if (root.contains("seed") && root.contains("seeds")) {
        fail(ErrorKind::config, "give either 'seed' or 'seeds', not both");
    }
    if (root.contains("seeds")) {
        config.seeds = get_or<std::vector<std::uint64_t>>(root, "seeds", {});
        if (config.seeds.empty()) fail(ErrorKind::config, "'seeds' must not be empty");
    } else {
        config.seeds.push_back(get_or<std::uint64_t>(root, "seed", 1));
    }
    config.base.seed = config.seeds.front();

    if (root.contains("algo_params")) {
        config.base.algo_params = parse_algo_params(root.at("algo_params"));
    }
    if (root.contains("fixed_point")) {
        const json& fp = root.at("fixed_point");
        require_keys(fp, "fixed_point", {"eps1", "eps2", "max_outer", "inner_tol", "inner_max_iters", "damping"});
        config.base.fp_eps1 = get_or<double>(fp, "eps1", 1e-3);
        config.base.fp_eps2 = get_or<double>(fp, "eps2", 1e-3);
        config.base.fp_max_outer = get_or<int>(fp, "max_outer", 200);
        config.base.rate_solve.inner_tol = get_or<double>(fp, "inner_tol", 1e-8);
        config.base.rate_solve.inner_max_iters = get_or<int>(fp, "inner_max_iters", 100);
        config.base.rate_solve.damping = get_or<double>(fp, "damping", 0.5);
    }
    if (root.contains("bounds_probe")) {
        const json& probe = root.at("bounds_probe");
        require_keys(probe, "bounds_probe", {"trials", "radius"});
        config.base.bound_probe_trials = get_or<int>(probe, "trials", 16);
        config.base.bound_probe_radius = get_or<double>(probe, "radius", 0.1);
    }
    if (root.contains("paths")) {
        config.paths = parse_paths(root.at("paths"));
    } else {
        config.paths.trajectory_path = config.paths.output_dir + "/trajectory.mft";
    }
    return config;
}

ExperimentConfig parse_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, path + ": cannot open config file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_text(buffer.str(), path);
}

namespace {

LabeledDataset take_prefix(LabeledDataset dataset, int limit) {
    if (limit <= 0 || static_cast<std::size_t>(limit) >= dataset.size()) return dataset;
    dataset.examples.labels.resize(static_cast<std::size_t>(limit));
    dataset.examples.inputs.resize(static_cast<std::size_t>(limit) *
                                   static_cast<std::size_t>(dataset.examples.input_dim));
    return dataset;
}

}  // namespace

void load_datasets(const ExperimentConfig& config, LabeledDataset& train, LabeledDataset& test) {
    if (config.dataset.source == DatasetSource::idx) {
        const std::string& dir = config.paths.dataset_dir;
        train = take_prefix(load_idx(dir + "/" + config.dataset.train_images,
                                     dir + "/" + config.dataset.train_labels),
                            config.dataset.train_limit);
        test = take_prefix(load_idx(dir + "/" + config.dataset.test_images,
                                    dir + "/" + config.dataset.test_labels),
                           config.dataset.test_limit);
        // A label prefix can miss the top class; keep the class count shared.
        int classes = std::max(train.num_classes, test.num_classes);
        train.num_classes = classes;
        test.num_classes = classes;
    } else {
        RngStream train_rng(config.dataset.seed, streams::id(streams::kSynthetic, 0));
        RngStream test_rng(config.dataset.seed, streams::id(streams::kSynthetic, 1));
        train = make_synthetic(config.dataset.num_classes, config.dataset.per_class,
                               config.dataset.input_dim, config.dataset.separation, train_rng);
        test = make_synthetic(config.dataset.num_classes, config.dataset.test_per_class,
                              config.dataset.input_dim, config.dataset.separation, test_rng);
        if (config.dataset.feature_scale != 1.0) {
            for (double& v : train.examples.inputs) v *= config.dataset.feature_scale;
            for (double& v : test.examples.inputs) v *= config.dataset.feature_scale;
        }
    }
    if (train.examples.input_dim != config.base.model.input_dim) {
        fail(ErrorKind::config, "model.input_dim " + std::to_string(config.base.model.input_dim) +
                                    " does not match dataset input_dim " +
                                    std::to_string(train.examples.input_dim));
    }
    if (train.num_classes > config.base.model.num_classes) {
        fail(ErrorKind::config, "dataset has " + std::to_string(train.num_classes) +
                                    " classes but the model only emits " +
                                    std::to_string(config.base.model.num_classes));
    }
}

}  // namespace fedent
