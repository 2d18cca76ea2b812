#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "crodobo/runner.hpp"

namespace crodobo {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string generator = "two_moons";  // two_moons | blobs | csv
    std::uint64_t seed = 1;

    // two_moons
    std::size_t n_source = 2000;
    std::size_t n_target = 2000;
    real noise_sd = real(0.2);
    real rotation_deg = 45;
    std::array<real, 2> translation{0, 0};

    // blobs
    int classes = 3;
    std::size_t n_per_class = 500;
    int dim = 2;
    real mean_shift = 1;
    real cov_scale = 1;
    std::vector<real> imbalance;

    // csv
    std::string source_path;
    std::string target_path;
    std::optional<std::string> label_column;
    std::optional<int> num_classes;
};

// The whole run, serializable: the manifest written next to the results is a
// valid config that reproduces the run.
struct RunConfig {
    int schema_version = 1;
    DatasetConfig dataset;
    std::vector<int> hidden_dims{128, 256};
    real bn_eps = real(1e-5);
    real bn_momentum = real(0.1);
    AdamConfig adam;
    HyperParams hp;
    WeakPolicy weak;
    AugmentPolicy strong;
    Seeds seeds;
    std::size_t query_size = 64;
    bool parallel_learners = false;
    bool distinct_init = false;
};

// Parses and validates; errors carry the offending field path (or line/column
// for malformed JSON).
RunConfig load_config(const std::string& path);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

// The config serialization with the stream seed blanked; reports sharing a
// fingerprint differ only in stream permutation.
std::string config_fingerprint(const RunConfig& config);

struct BuiltData {
    Dataset source;
    Dataset target;
};

BuiltData build_datasets(const DatasetConfig& config);

// Resolves input_dim / num_classes from the data and assembles RunOptions.
RunOptions to_run_options(const RunConfig& config, const BuiltData& data);

}  // namespace crodobo
