#include <doctest.h>

#include "core/config.hpp"

using namespace fedent;

namespace {

const char* kValidConfig = R"json({
  "algorithm": ["fedavg", "fedent"],
  "model": {"kind": "softmax_regression", "input_dim": 2, "num_classes": 2},
  "dataset": {"source": "synthetic", "num_classes": 2, "per_class": 30, "test_per_class": 10,
              "input_dim": 2, "separation": 3.0, "seed": 4},
  "partition": {"scheme": "pathological", "num_clients": 4, "shards_per_client": 2, "seed": 9},
  "rounds": 5,
  "local_epochs": 2,
  "batch_size": 16,
  "base_lr": 0.05,
  "beta": 0.9,
  "gamma": 0.5,
  "sample_fraction": 1.0,
  "seeds": [1, 2],
  "paths": {"output_dir": "/tmp/fedent_cfg_out"}
})json";

}  // namespace

TEST_CASE("a valid experiment file parses with defaults applied") {
    ExperimentConfig config = parse_experiment_text(kValidConfig, "test");
    CHECK(config.algorithms.size() == 2);
    CHECK(config.algorithms[0] == Algorithm::fedavg);
    CHECK(config.algorithms[1] == Algorithm::fedent);
    CHECK(config.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(config.base.rounds == 5);
    CHECK(config.base.fp_eps1 == 1e-3);  // paper default when unset
    CHECK(config.base.fp_eps2 == 1e-3);
    CHECK(config.base.fp_max_outer == 200);
    CHECK(config.base.rate_solve.inner_tol == 1e-8);
    CHECK(config.base.rate_solve.damping == 0.5);
    CHECK(config.base.algo_params.mu == 0.01);
    CHECK(config.base.algo_params.alpha == 0.001);
    CHECK(config.base.algo_params.beta1 == 0.9);
    CHECK(config.base.algo_params.beta2 == 0.99);
    CHECK(config.base.algo_params.tau == 1e-3);
    CHECK(config.paths.trajectory_path == "/tmp/fedent_cfg_out/trajectory.mft");
    // Per-seed trajectory files when running a seed grid.
    CHECK(config.trajectory_path_for_seed(2) == "/tmp/fedent_cfg_out/trajectory_seed2.mft");
}

TEST_CASE("unknown keys are rejected with their name") {
    std::string bad = kValidConfig;
    bad.insert(bad.rfind('}'), ", \"typo_key\": 1");
    CHECK_THROWS_WITH_AS(parse_experiment_text(bad, "test"), doctest::Contains("typo_key"), Error);

    const char* nested = R"json({
      "algorithm": "fedavg",
      "model": {"kind": "mlp", "input_dim": 4, "hidden_dims": [3], "num_classes": 2, "dropout": 0.5},
      "dataset": {"source": "synthetic"},
      "partition": {"scheme": "iid", "num_clients": 2}
    })json";
    CHECK_THROWS_WITH_AS(parse_experiment_text(nested, "test"), doctest::Contains("dropout"), Error);
}

TEST_CASE("malformed json and missing fields fail as config errors") {
    CHECK_THROWS_AS(parse_experiment_text("{not json", "test"), Error);
    CHECK_THROWS_WITH_AS(parse_experiment_text(R"({"algorithm": "fedavg"})", "test"),
                         doctest::Contains("model"), Error);
    CHECK_THROWS_WITH_AS(parse_experiment_text(R"({"algorithm": "fedsomething",
        "model": {"kind": "mlp", "input_dim": 4, "hidden_dims": [3], "num_classes": 2},
        "dataset": {"source": "synthetic"},
        "partition": {"scheme": "iid", "num_clients": 2}})",
                                               "test"),
                         doctest::Contains("fedsomething"), Error);
}

TEST_CASE("seed and seeds are mutually exclusive") {
    std::string both = kValidConfig;
    both.insert(both.rfind('}'), ", \"seed\": 3");
    CHECK_THROWS_WITH_AS(parse_experiment_text(both, "test"), doctest::Contains("seed"), Error);
}

TEST_CASE("scheme-specific partition fields are enforced both ways") {
    const char* missing_alpha = R"json({
      "algorithm": "fedavg",
      "model": {"kind": "softmax_regression", "input_dim": 2, "num_classes": 2},
      "dataset": {"source": "synthetic"},
      "partition": {"scheme": "dirichlet", "num_clients": 2}
    })json";
    CHECK_THROWS_WITH_AS(parse_experiment_text(missing_alpha, "test"), doctest::Contains("alpha_d"),
                         Error);

    const char* stray_shards = R"json({
      "algorithm": "fedavg",
      "model": {"kind": "softmax_regression", "input_dim": 2, "num_classes": 2},
      "dataset": {"source": "synthetic"},
      "partition": {"scheme": "iid", "num_clients": 2, "shards_per_client": 2}
    })json";
    CHECK_THROWS_WITH_AS(parse_experiment_text(stray_shards, "test"),
                         doctest::Contains("shards_per_client"), Error);
}

TEST_CASE("datasets materialize and dimension mismatches are caught") {
    ExperimentConfig config = parse_experiment_text(kValidConfig, "test");
    LabeledDataset train, test;
    load_datasets(config, train, test);
    CHECK(train.size() == 60);
    CHECK(test.size() == 20);
    CHECK(train.examples.input_dim == 2);

    ExperimentConfig broken = config;
    broken.base.model.input_dim = 5;
    CHECK_THROWS_WITH_AS(load_datasets(broken, train, test), doctest::Contains("input_dim"), Error);
}
