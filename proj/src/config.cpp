#include "crodobo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace crodobo {

using nlohmann::json;

namespace {

// Typed block reader that reports full field paths and rejects unknown keys
// (a typo in a sweep config must not silently no-op).
class Block {
public:
    Block(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    template <typename T>
    T get(const std::string& key, const T& fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            return fallback;
        }
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    template <typename T>
    std::optional<T> get_optional(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) {
            return std::nullopt;
        }
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    json sub(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : json::object();
    }

    void finish() {
        for (const auto& [key, value] : j_.items()) {
            (void)value;
            if (!seen_.count(key)) {
                throw ConfigError(path_ + ": unknown key '" + key + "'");
            }
        }
    }

private:
    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

DatasetConfig dataset_from_json(const json& j) {
    Block b(j, "dataset");
    DatasetConfig d;
    d.generator = b.get<std::string>("generator", d.generator);
    d.seed = b.get<std::uint64_t>("seed", d.seed);
    d.n_source = b.get<std::size_t>("n_source", d.n_source);
    d.n_target = b.get<std::size_t>("n_target", d.n_target);
    d.noise_sd = real(b.get<double>("noise_sd", double(d.noise_sd)));
    d.rotation_deg = real(b.get<double>("rotation_deg", double(d.rotation_deg)));
    const auto translation =
        b.get<std::vector<double>>("translation", {double(d.translation[0]), double(d.translation[1])});
    if (translation.size() != 2) {
        throw ConfigError("dataset.translation: expected exactly 2 numbers");
    }
    d.translation = {real(translation[0]), real(translation[1])};
    d.classes = b.get<int>("classes", d.classes);
    d.n_per_class = b.get<std::size_t>("n_per_class", d.n_per_class);
    d.dim = b.get<int>("dim", d.dim);
    d.mean_shift = real(b.get<double>("mean_shift", double(d.mean_shift)));
    d.cov_scale = real(b.get<double>("cov_scale", double(d.cov_scale)));
    const auto imbalance = b.get<std::vector<double>>("imbalance", {});
    d.imbalance.assign(imbalance.begin(), imbalance.end());
    d.source_path = b.get<std::string>("source_path", "");
    d.target_path = b.get<std::string>("target_path", "");
    d.label_column = b.get_optional<std::string>("label_column");
    d.num_classes = b.get_optional<int>("num_classes");
    b.finish();
    if (d.generator != "two_moons" && d.generator != "blobs" && d.generator != "csv") {
        throw ConfigError("dataset.generator: expected two_moons|blobs|csv, got '" + d.generator +
                          "'");
    }
    if (d.generator == "csv" && (d.source_path.empty() || d.target_path.empty())) {
        throw ConfigError("dataset: the csv generator needs source_path and target_path");
    }
    return d;
}

json dataset_to_json(const DatasetConfig& d) {
    json j{{"generator", d.generator}, {"seed", d.seed}};
    if (d.generator == "two_moons") {
        j["n_source"] = d.n_source;
        j["n_target"] = d.n_target;
        j["noise_sd"] = double(d.noise_sd);
        j["rotation_deg"] = double(d.rotation_deg);
        j["translation"] = {double(d.translation[0]), double(d.translation[1])};
    } else if (d.generator == "blobs") {
        j["classes"] = d.classes;
        j["n_per_class"] = d.n_per_class;
        j["dim"] = d.dim;
        j["mean_shift"] = double(d.mean_shift);
        j["cov_scale"] = double(d.cov_scale);
        j["imbalance"] = std::vector<double>(d.imbalance.begin(), d.imbalance.end());
    } else {
        j["source_path"] = d.source_path;
        j["target_path"] = d.target_path;
        if (d.label_column) {
            j["label_column"] = *d.label_column;
        }
        if (d.num_classes) {
            j["num_classes"] = *d.num_classes;
        }
    }
    return j;
}

}  // namespace

RunConfig config_from_json(const json& j) {
    Block top(j, "config");
    RunConfig c;
    c.schema_version = top.get<int>("schema_version", 1);
    if (c.schema_version != 1) {
        throw ConfigError("config.schema_version: this build reads version 1, got " +
                          std::to_string(c.schema_version));
    }
    if (!top.has("dataset")) {
        throw ConfigError("config.dataset: required block is missing");
    }
    c.dataset = dataset_from_json(top.sub("dataset"));

    {
        Block b(top.sub("model"), "model");
        c.hidden_dims = b.get<std::vector<int>>("hidden_dims", c.hidden_dims);
        c.bn_eps = real(b.get<double>("batch_norm_eps", double(c.bn_eps)));
        c.bn_momentum = real(b.get<double>("batch_norm_momentum", double(c.bn_momentum)));
        b.finish();
    }
    {
        Block b(top.sub("optimizer"), "optimizer");
        c.adam.learning_rate = real(b.get<double>("learning_rate", double(c.adam.learning_rate)));
        c.adam.beta1 = real(b.get<double>("beta1", double(c.adam.beta1)));
        c.adam.beta2 = real(b.get<double>("beta2", double(c.adam.beta2)));
        c.adam.epsilon = real(b.get<double>("epsilon", double(c.adam.epsilon)));
        b.finish();
        try {
            c.adam.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("optimizer: ") + e.what());
        }
    }
    {
        Block b(top.sub("hyperparams"), "hyperparams");
        c.hp.tau = real(b.get<double>("tau", double(c.hp.tau)));
        c.hp.lambda = real(b.get<double>("lambda", double(c.hp.lambda)));
        c.hp.steps_per_query = b.get<int>("steps_per_query", c.hp.steps_per_query);
        const std::string mode = b.get<std::string>("mode", to_string(c.hp.mode));
        try {
            c.hp.mode = run_mode_from_string(mode);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("hyperparams.mode: ") + e.what());
        }
        c.hp.num_learners = b.get<int>("num_learners", c.hp.num_learners);
        c.hp.use_exchange = b.get<bool>("use_exchange", c.hp.use_exchange);
        c.hp.use_entropy = b.get<bool>("use_entropy", c.hp.use_entropy);
        c.hp.use_diversity = b.get<bool>("use_diversity", c.hp.use_diversity);
        b.finish();
        try {
            c.hp.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("hyperparams: ") + e.what());
        }
    }
    {
        Block outer(top.sub("augment"), "augment");
        {
            Block b(outer.sub("weak"), "augment.weak");
            c.weak.jitter = b.get<bool>("jitter", c.weak.jitter);
            c.weak.sigma_rel = real(b.get<double>("sigma_rel", double(c.weak.sigma_rel)));
            b.finish();
        }
        {
            Block b(outer.sub("strong"), "augment.strong");
            std::vector<std::string> names;
            for (AugmentOp op : c.strong.ops) {
                names.push_back(to_string(op));
            }
            names = b.get<std::vector<std::string>>("ops", names);
            c.strong.ops.clear();
            for (const std::string& name : names) {
                try {
                    c.strong.ops.push_back(augment_op_from_string(name));
                } catch (const std::invalid_argument& e) {
                    throw ConfigError(std::string("augment.strong.ops: ") + e.what());
                }
            }
            c.strong.num_ops = b.get<int>("num_ops", c.strong.num_ops);
            c.strong.magnitude = real(b.get<double>("magnitude", double(c.strong.magnitude)));
            b.finish();
            try {
                c.strong.validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("augment.strong: ") + e.what());
            }
        }
        outer.finish();
    }
    {
        Block b(top.sub("stream"), "stream");
        c.query_size = b.get<std::size_t>("query_size", c.query_size);
        b.finish();
        if (c.query_size < 1) {
            throw ConfigError("stream.query_size: must be >= 1");
        }
    }
    {
        Block b(top.sub("seeds"), "seeds");
        c.seeds.init = b.get<std::uint64_t>("init", c.seeds.init);
        c.seeds.stream = b.get<std::uint64_t>("stream", c.seeds.stream);
        c.seeds.bootstrap = b.get<std::uint64_t>("bootstrap", c.seeds.bootstrap);
        c.seeds.augment = b.get<std::uint64_t>("augment", c.seeds.augment);
        b.finish();
    }
    {
        Block b(top.sub("run"), "run");
        c.parallel_learners = b.get<bool>("parallel_learners", c.parallel_learners);
        c.distinct_init = b.get<bool>("distinct_init", c.distinct_init);
        b.finish();
    }
    top.get<json>("_meta", json::object());  // manifests carry provenance; ignored on load
    top.finish();
    return c;
}

json config_to_json(const RunConfig& c) {
    std::vector<std::string> ops;
    for (AugmentOp op : c.strong.ops) {
        ops.push_back(to_string(op));
    }
    return json{
        {"schema_version", c.schema_version},
        {"dataset", dataset_to_json(c.dataset)},
        {"model",
         {{"hidden_dims", c.hidden_dims},
          {"batch_norm_eps", double(c.bn_eps)},
          {"batch_norm_momentum", double(c.bn_momentum)}}},
        {"optimizer",
         {{"learning_rate", double(c.adam.learning_rate)},
          {"beta1", double(c.adam.beta1)},
          {"beta2", double(c.adam.beta2)},
          {"epsilon", double(c.adam.epsilon)}}},
        {"hyperparams",
         {{"tau", double(c.hp.tau)},
          {"lambda", double(c.hp.lambda)},
          {"steps_per_query", c.hp.steps_per_query},
          {"mode", to_string(c.hp.mode)},
          {"num_learners", c.hp.num_learners},
          {"use_exchange", c.hp.use_exchange},
          {"use_entropy", c.hp.use_entropy},
          {"use_diversity", c.hp.use_diversity}}},
        {"augment",
         {{"weak", {{"jitter", c.weak.jitter}, {"sigma_rel", double(c.weak.sigma_rel)}}},
          {"strong",
           {{"ops", ops}, {"num_ops", c.strong.num_ops}, {"magnitude", double(c.strong.magnitude)}}}}},
        {"stream", {{"query_size", c.query_size}}},
        {"seeds",
         {{"init", c.seeds.init},
          {"stream", c.seeds.stream},
          {"bootstrap", c.seeds.bootstrap},
          {"augment", c.seeds.augment}}},
        {"run", {{"parallel_learners", c.parallel_learners}, {"distinct_init", c.distinct_init}}}};
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // e.byte anchors the failure; convert to line:column.
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                          e.what());
    }
    try {
        return config_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string config_fingerprint(const RunConfig& config) {
    json j = config_to_json(config);
    j["seeds"]["stream"] = 0;
    return j.dump();
}

BuiltData build_datasets(const DatasetConfig& config) {
    BuiltData data;
    if (config.generator == "two_moons") {
        TwoMoonsParams params;
        params.n_source = config.n_source;
        params.n_target = config.n_target;
        params.noise_sd = config.noise_sd;
        params.rotation_deg = config.rotation_deg;
        params.translation = config.translation;
        params.seed = config.seed;
        std::tie(data.source, data.target) = gen_two_moons_shift(params);
    } else if (config.generator == "blobs") {
        BlobsParams params;
        params.classes = config.classes;
        params.n_per_class = config.n_per_class;
        params.dim = config.dim;
        params.mean_shift = config.mean_shift;
        params.cov_scale = config.cov_scale;
        params.imbalance = config.imbalance;
        params.seed = config.seed;
        std::tie(data.source, data.target) = gen_class_shift_blobs(params);
    } else {
        data.source = load_csv(config.source_path, config.label_column, config.num_classes);
        data.target = load_csv(config.target_path, config.label_column, config.num_classes);
    }
    return data;
}

RunOptions to_run_options(const RunConfig& config, const BuiltData& data) {
    RunOptions options;
    options.model.input_dim = int(data.target.dim());
    options.model.hidden_dims = config.hidden_dims;
    options.model.num_classes =
        data.source.labeled() ? data.source.num_classes : data.target.num_classes;
    options.model.bn_eps = config.bn_eps;
    options.model.bn_momentum = config.bn_momentum;
    try {
        options.model.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    options.adam = config.adam;
    options.hp = config.hp;
    options.weak = config.weak;
    options.strong = config.strong;
    options.seeds = config.seeds;
    options.query_size = config.query_size;
    options.parallel_learners = config.parallel_learners;
    options.distinct_init = config.distinct_init;
    if (data.source.labeled() && data.source.dim() != data.target.dim()) {
        throw ConfigError("dataset: source and target dimensionality differ");
    }
    return options;
}

}  // namespace crodobo
