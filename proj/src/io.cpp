#include "crodobo/io.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace crodobo {

using nlohmann::json;

namespace {

void write_f64(std::ofstream& out, const real* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(data[i]);
        out.write(reinterpret_cast<const char*>(&d), 8);
    }
}

void read_f64(std::ifstream& in, real* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double d;
        in.read(reinterpret_cast<char*>(&d), 8);
        data[i] = real(d);
    }
}

json spec_to_json(const NetworkSpec& spec) {
    return json{{"input_dim", spec.input_dim},
                {"hidden_dims", spec.hidden_dims},
                {"num_classes", spec.num_classes},
                {"batch_norm_eps", double(spec.bn_eps)},
                {"batch_norm_momentum", double(spec.bn_momentum)}};
}

NetworkSpec spec_from_json(const json& j) {
    NetworkSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    spec.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    spec.num_classes = j.at("num_classes").get<int>();
    spec.bn_eps = real(j.at("batch_norm_eps").get<double>());
    spec.bn_momentum = real(j.at("batch_norm_momentum").get<double>());
    return spec;
}

void write_network_block(std::ofstream& out, const Network& net) {
    const std::string spec = spec_to_json(net.spec).dump();
    const std::uint32_t spec_len = std::uint32_t(spec.size());
    out.write(reinterpret_cast<const char*>(&spec_len), 4);
    out.write(spec.data(), std::streamsize(spec.size()));
    for (std::size_t l = 0; l < net.dense.size(); ++l) {
        write_f64(out, net.dense[l].weight.data(), net.dense[l].weight.size());
        write_f64(out, net.dense[l].bias.data(), net.dense[l].bias.size());
        if (l < net.bn.size()) {
            write_f64(out, net.bn[l].gamma.data(), net.bn[l].gamma.size());
            write_f64(out, net.bn[l].beta.data(), net.bn[l].beta.size());
            write_f64(out, net.bn[l].running_mean.data(), net.bn[l].running_mean.size());
            write_f64(out, net.bn[l].running_var.data(), net.bn[l].running_var.size());
        }
    }
}

Network read_network_block(std::ifstream& in, const std::string& path) {
    std::uint32_t spec_len = 0;
    in.read(reinterpret_cast<char*>(&spec_len), 4);
    std::string spec_text(spec_len, '\0');
    in.read(spec_text.data(), spec_len);
    if (!in) {
        throw std::runtime_error("load: " + path + " truncated (spec block)");
    }
    NetworkSpec spec = spec_from_json(json::parse(spec_text));
    Network net = init_network(spec, 0);  // shapes only; values overwritten below
    for (std::size_t l = 0; l < net.dense.size(); ++l) {
        read_f64(in, net.dense[l].weight.data(), net.dense[l].weight.size());
        read_f64(in, net.dense[l].bias.data(), net.dense[l].bias.size());
        if (l < net.bn.size()) {
            read_f64(in, net.bn[l].gamma.data(), net.bn[l].gamma.size());
            read_f64(in, net.bn[l].beta.data(), net.bn[l].beta.size());
            read_f64(in, net.bn[l].running_mean.data(), net.bn[l].running_mean.size());
            read_f64(in, net.bn[l].running_var.data(), net.bn[l].running_var.size());
        }
    }
    if (!in) {
        throw std::runtime_error("load: " + path + " truncated (parameter payload)");
    }
    return net;
}

}  // namespace

void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_network: cannot open " + path);
    }
    out.write("CRDB", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    write_network_block(out, net);
}

Network load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_network: cannot open " + path);
    }
    char magic[4];
    in.read(magic, 4);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || std::memcmp(magic, "CRDB", 4) != 0 || version != 1) {
        throw std::runtime_error("load_network: " + path + " is not a CRDB v1 checkpoint");
    }
    return read_network_block(in, path);
}

void save_ensemble(const LearnerEnsemble& ensemble, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_ensemble: cannot open " + path);
    }
    out.write("CRDE", 4);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t k = std::uint32_t(ensemble.size());
    out.write(reinterpret_cast<const char*>(&k), 4);
    for (const Learner& learner : ensemble.learners) {
        write_network_block(out, learner.net);
    }
}

LearnerEnsemble load_ensemble(const std::string& path, const AdamConfig& adam,
                              std::uint64_t augment_seed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_ensemble: cannot open " + path);
    }
    char magic[4];
    in.read(magic, 4);
    std::uint32_t version = 0, k = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&k), 4);
    if (!in || std::memcmp(magic, "CRDE", 4) != 0 || version != 1 || k == 0) {
        throw std::runtime_error("load_ensemble: " + path + " is not a CRDE v1 checkpoint");
    }
    LearnerEnsemble ens{NetworkSpec{}, {}, Rng(mix_seed(augment_seed, 0xfeed))};
    for (std::uint32_t i = 0; i < k; ++i) {
        Network net = read_network_block(in, path);
        if (i == 0) {
            ens.spec = net.spec;
        } else if (!(net.spec == ens.spec)) {
            throw std::runtime_error("load_ensemble: " + path + " mixes network specs");
        }
        OptimizerState opt = OptimizerState::create(net, adam);
        ens.learners.push_back(
            Learner{std::move(net), std::move(opt), Rng(mix_seed(augment_seed, i))});
    }
    return ens;
}

namespace {

json outcome_to_json(const QueryOutcome& o, const HiddenLabels&) {
    json losses = json::array();
    for (const LearnerLosses& l : o.losses) {
        losses.push_back(json{{"source", l.source},
                              {"exchange", l.exchange},
                              {"entropy", l.entropy},
                              {"diversity", l.diversity},
                              {"accepted", l.accepted}});
    }
    std::vector<double> probs(o.ensemble_probs.storage().begin(), o.ensemble_probs.storage().end());
    return json{{"query_index", o.query_index},
                {"batch", o.predicted.size()},
                {"predicted", o.predicted},
                {"ensemble_probs", probs},
                {"num_classes", o.ensemble_probs.cols()},
                {"losses", losses},
                {"learner_steps", o.learner_steps}};
}

}  // namespace

void write_trace_jsonl(const RunTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_trace_jsonl: cannot open " + path);
    }
    for (std::size_t j = 0; j < trace.outcomes().size(); ++j) {
        out << outcome_to_json(trace.outcomes()[j], trace.hidden_labels()[j]).dump() << "\n";
    }
}

namespace {

json report_to_json(const MetricsReport& r) {
    return json{{"online_average", r.online_average},
                {"online_average_query_weighted", r.online_average_query_weighted},
                {"one_pass_overall", r.one_pass_overall},
                {"one_pass_class_average", r.one_pass_class_average},
                {"one_pass_per_class", r.one_pass_per_class},
                {"per_query_accuracy", r.per_query_accuracy},
                {"per_query_sizes", r.per_query_sizes},
                {"acceptance_rate", r.acceptance_rate},
                {"n_target", r.n_target},
                {"wall_seconds", r.wall_seconds},
                {"stream_seed", r.stream_seed},
                {"config_fingerprint", r.config_fingerprint}};
}

}  // namespace

void write_report_json(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_report_json: cannot open " + path);
    }
    out << report_to_json(report).dump(2) << "\n";
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_report_csv: cannot open " + path);
    }
    out << "stream_seed,n_target,online_average,online_average_query_weighted,"
           "one_pass_overall,one_pass_class_average,wall_seconds\n";
    out << report.stream_seed << "," << report.n_target << "," << report.online_average << ","
        << report.online_average_query_weighted << "," << report.one_pass_overall << ","
        << report.one_pass_class_average << "," << report.wall_seconds << "\n";
}

void write_per_query_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_per_query_csv: cannot open " + path);
    }
    out << "query_index,batch,accuracy,acceptance_rate\n";
    for (std::size_t j = 0; j < report.per_query_accuracy.size(); ++j) {
        out << j << "," << report.per_query_sizes[j] << "," << report.per_query_accuracy[j] << ","
            << report.acceptance_rate[j] << "\n";
    }
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t size) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("fnv1a_file: cannot open " + path);
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace crodobo
