#include "crodobo/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "crodobo/config.hpp"
#include "crodobo/gradcheck.hpp"
#include "crodobo/io.hpp"

namespace crodobo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t hash_dataset(const Dataset& d) {
    std::uint64_t h = fnv1a_bytes(d.features.data(), d.features.size() * sizeof(real));
    if (!d.labels.empty()) {
        h ^= fnv1a_bytes(d.labels.data(), d.labels.size() * sizeof(int));
    }
    return h;
}

struct SingleRun {
    MetricsReport report;
    std::uint64_t trace_hash = 0;
    LearnerEnsemble ensemble;
    // mean per-learner losses over the stream, for the ablation table
    double mean_exchange = 0;
    double mean_entropy = 0;
    double mean_diversity = 0;
};

SingleRun execute_run(const RunConfig& config, const BuiltData& data, std::uint64_t stream_seed,
                      const fs::path& outdir, std::optional<LearnerEnsemble> initial = {}) {
    RunOptions options = to_run_options(config, data);
    options.seeds.stream = stream_seed;

    TargetStream stream(data.target, config.query_size, stream_seed);
    RunResult result = run_online(data.source, stream, options, std::move(initial));
    OnePass op = one_pass(result.ensemble, data.target, &stream);

    SingleRun run{build_report(result.trace, op), 0, std::move(result.ensemble), 0, 0, 0};
    run.report.wall_seconds = result.wall_seconds;
    run.report.stream_seed = stream_seed;
    run.report.config_fingerprint = config_fingerprint(config);

    fs::create_directories(outdir);
    write_trace_jsonl(result.trace, (outdir / "trace.jsonl").string());
    write_report_json(run.report, (outdir / "report.json").string());
    write_report_csv(run.report, (outdir / "report.csv").string());
    write_per_query_csv(run.report, (outdir / "per_query_accuracy.csv").string());
    write_audit_log(stream.audit(), (outdir / "audit.jsonl").string());
    run.trace_hash = fnv1a_file((outdir / "trace.jsonl").string());

    std::size_t queries = result.trace.outcomes().size();
    for (const QueryOutcome& o : result.trace.outcomes()) {
        double ex = 0, ent = 0, div = 0;
        for (const LearnerLosses& l : o.losses) {
            ex += l.exchange;
            ent += l.entropy;
            div += l.diversity;
        }
        run.mean_exchange += ex / double(o.losses.size());
        run.mean_entropy += ent / double(o.losses.size());
        run.mean_diversity += div / double(o.losses.size());
    }
    if (queries > 0) {
        run.mean_exchange /= double(queries);
        run.mean_entropy /= double(queries);
        run.mean_diversity /= double(queries);
    }
    return run;
}

void write_manifest(const RunConfig& config, const BuiltData& data,
                    const std::vector<std::uint64_t>& stream_seeds,
                    const std::vector<std::uint64_t>& trace_hashes, const fs::path& outdir) {
    json manifest = config_to_json(config);
    manifest["_meta"] = json{{"created", iso8601_utc_now()},
                             {"schema", "crodobo-run-manifest"},
                             {"version", "0.1.0"},
                             {"n_source", data.source.size()},
                             {"n_target", data.target.size()},
                             {"input_dim", data.target.dim()},
                             {"num_classes", data.target.num_classes},
                             {"source_hash", hash_dataset(data.source)},
                             {"target_hash", hash_dataset(data.target)},
                             {"stream_seeds", stream_seeds},
                             {"trace_hashes", trace_hashes}};
    std::ofstream out(outdir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

void write_seed_table(const std::vector<MetricsReport>& reports, const fs::path& path) {
    const SeedAggregate agg = aggregate_seeds(reports);
    std::ofstream out(path);
    out << "metric";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << ",rand " << i;
    }
    // population variance: sum((x-mean)^2)/n
    out << ",mean,var\n";
    out << "online";
    for (const MetricsReport& r : reports) {
        out << "," << 100.0 * r.online_average;
    }
    out << "," << 100.0 * agg.online.mean << "," << 10000.0 * agg.online.population_variance
        << "\n";
    out << "one_pass";
    for (const MetricsReport& r : reports) {
        out << "," << 100.0 * r.one_pass_overall;
    }
    out << "," << 100.0 * agg.one_pass_overall.mean << ","
        << 10000.0 * agg.one_pass_overall.population_variance << "\n";
}

int cmd_run(const std::string& config_path, const std::string& out,
            std::vector<std::uint64_t> seeds, const std::string& save_model,
            const std::string& load_model, bool distinct_init) {
    RunConfig config = load_config(config_path);
    if (distinct_init) {
        config.distinct_init = true;
    }
    BuiltData data = build_datasets(config.dataset);
    if (seeds.empty()) {
        seeds.push_back(config.seeds.stream);
    }

    const fs::path outdir(out);
    fs::create_directories(outdir);
    std::vector<MetricsReport> reports;
    std::vector<std::uint64_t> hashes;
    std::optional<LearnerEnsemble> last_ensemble;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        std::optional<LearnerEnsemble> initial;
        if (!load_model.empty()) {
            initial = load_ensemble(load_model, config.adam, config.seeds.augment);
        }
        const fs::path rundir = seeds.size() == 1
                                    ? outdir
                                    : outdir / ("seed_" + std::to_string(seeds[i]));
        SingleRun run = execute_run(config, data, seeds[i], rundir, std::move(initial));
        std::cout << "seed " << seeds[i] << ": online " << 100.0 * run.report.online_average
                  << "% one-pass " << 100.0 * run.report.one_pass_overall << "% ("
                  << run.report.wall_seconds << " s)\n";
        reports.push_back(run.report);
        hashes.push_back(run.trace_hash);
        last_ensemble = std::move(run.ensemble);
    }
    write_manifest(config, data, seeds, hashes, outdir);
    if (reports.size() > 1) {
        write_seed_table(reports, outdir / "aggregate.csv");
        const SeedAggregate agg = aggregate_seeds(reports);
        std::cout << "mean online " << 100.0 * agg.online.mean << "% (population var "
                  << 10000.0 * agg.online.population_variance << ")\n";
    }
    if (!save_model.empty() && last_ensemble) {
        save_ensemble(*last_ensemble, save_model);
        std::cout << "model saved to " << save_model << "\n";
    }
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out, const std::string& param,
              const std::vector<double>& values) {
    if (values.empty()) {
        std::cerr << "warning: empty value list, nothing to sweep\n";
        return 0;
    }
    RunConfig base = load_config(config_path);
    const fs::path outdir(out);
    fs::create_directories(outdir);

    std::vector<MetricsReport> reports;
    for (double value : values) {
        RunConfig config = base;
        if (param == "tau") {
            config.hp.tau = real(value);
        } else if (param == "lambda") {
            config.hp.lambda = real(value);
        } else if (param == "steps_per_query") {
            config.hp.steps_per_query = int(value);
        } else if (param == "query_size") {
            config.query_size = std::size_t(value);
        } else {
            throw ConfigError("sweep: unknown parameter '" + param +
                              "' (expected tau|lambda|steps_per_query|query_size)");
        }
        try {
            config.hp.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("sweep value ") + std::to_string(value) + ": " +
                              e.what());
        }
        BuiltData data = build_datasets(config.dataset);
        std::ostringstream tag;
        tag << param << "_" << value;
        SingleRun run = execute_run(config, data, config.seeds.stream, outdir / tag.str());
        std::cout << param << " = " << value << ": online "
                  << 100.0 * run.report.online_average << "% one-pass "
                  << 100.0 * run.report.one_pass_overall << "%\n";
        reports.push_back(run.report);
    }

    // Row shape: metric per value, then mean and variance across the values.
    std::ofstream table(outdir / "sweep.csv");
    table << "metric/" << param;
    for (double v : values) {
        table << "," << v;
    }
    table << ",mean,var\n";
    auto emit = [&](const std::string& name, auto get) {
        table << name;
        double mean = 0;
        for (const MetricsReport& r : reports) {
            table << "," << 100.0 * get(r);
            mean += 100.0 * get(r);
        }
        mean /= double(reports.size());
        double var = 0;
        for (const MetricsReport& r : reports) {
            const double d = 100.0 * get(r) - mean;
            var += d * d;
        }
        var /= double(reports.size());
        table << "," << mean << "," << var << "\n";
    };
    emit("online", [](const MetricsReport& r) { return r.online_average; });
    emit("one_pass", [](const MetricsReport& r) { return r.one_pass_overall; });
    return 0;
}

struct AblationVariant {
    std::string name;
    RunMode mode;
    bool use_entropy;
    bool use_diversity;
};

int cmd_ablate(const std::string& config_path, const std::string& out,
               std::vector<std::uint64_t> seeds) {
    RunConfig base = load_config(config_path);
    if (seeds.empty()) {
        seeds.push_back(base.seeds.stream);
    }
    const fs::path outdir(out);
    fs::create_directories(outdir);

    const std::vector<AblationVariant> variants = {
        {"crodobo", RunMode::crodobo, true, true},
        {"single", RunMode::single, true, true},
        {"single_wo_ent", RunMode::single, false, true},
        {"single_wo_div", RunMode::single, true, false},
        {"source_only", RunMode::source_only, true, true},
        {"continual", RunMode::continual, true, true},
    };

    std::ofstream table(outdir / "ablation.csv");
    table << "variant,exchange_loss,entropy_loss,diversity_loss,online_mean,online_var,"
             "one_pass_mean,one_pass_var\n";
    for (const AblationVariant& variant : variants) {
        RunConfig config = base;
        config.hp.mode = variant.mode;
        config.hp.use_entropy = variant.use_entropy;
        config.hp.use_diversity = variant.use_diversity;
        BuiltData data = build_datasets(config.dataset);

        std::vector<MetricsReport> reports;
        double ex = 0, ent = 0, div = 0;
        for (std::uint64_t seed : seeds) {
            SingleRun run = execute_run(config, data, seed, outdir / variant.name,
                                        std::nullopt);
            reports.push_back(run.report);
            ex += run.mean_exchange;
            ent += run.mean_entropy;
            div += run.mean_diversity;
        }
        ex /= double(seeds.size());
        ent /= double(seeds.size());
        div /= double(seeds.size());

        double online_mean = 0, one_pass_mean = 0;
        for (const MetricsReport& r : reports) {
            online_mean += 100.0 * r.online_average;
            one_pass_mean += 100.0 * r.one_pass_overall;
        }
        online_mean /= double(reports.size());
        one_pass_mean /= double(reports.size());
        double online_var = 0, one_pass_var = 0;
        for (const MetricsReport& r : reports) {
            online_var += (100.0 * r.online_average - online_mean) *
                          (100.0 * r.online_average - online_mean);
            one_pass_var += (100.0 * r.one_pass_overall - one_pass_mean) *
                            (100.0 * r.one_pass_overall - one_pass_mean);
        }
        online_var /= double(reports.size());
        one_pass_var /= double(reports.size());

        const bool target_terms = variant.mode != RunMode::source_only;
        table << variant.name << ",";
        if (target_terms) {
            table << ex;
        }
        table << ",";
        if (target_terms && variant.use_entropy) {
            table << ent;
        }
        table << ",";
        if (target_terms && variant.use_diversity) {
            table << div;
        }
        table << "," << online_mean << "," << online_var << "," << one_pass_mean << ","
              << one_pass_var << "\n";
        std::cout << variant.name << ": online " << online_mean << "% one-pass " << one_pass_mean
                  << "%\n";
    }
    return 0;
}

int cmd_gradcheck(double eps, double fd_step, int instances, bool inject_bn_bug) {
    GradCheckOptions options;
    options.fd_step = real(fd_step);
    options.corrupt_bn_backward = inject_bn_bug;

    NetworkSpec deep;
    deep.input_dim = 3;
    deep.hidden_dims = {5, 4};
    deep.num_classes = 3;
    NetworkSpec shallow;
    shallow.input_dim = 4;
    shallow.hidden_dims = {6};
    shallow.num_classes = 2;

    std::cout << "loss        net      instances  max_rel_err  tolerance  status\n";
    bool ok = true;
    for (GradCheckLoss loss : {GradCheckLoss::source, GradCheckLoss::exchange,
                               GradCheckLoss::entropy, GradCheckLoss::diversity}) {
        for (const auto& [name, spec] : {std::pair<const char*, NetworkSpec>{"deep", deep},
                                         {"shallow", shallow}}) {
            real worst = 0;
            for (int i = 0; i < instances; ++i) {
                worst = std::max(worst, grad_check(spec, std::uint64_t(i), loss, options));
            }
            const bool pass = worst < real(eps);
            ok = ok && pass;
            std::ostringstream row;
            row << std::left << std::setw(12) << to_string(loss) << std::setw(9) << name
                << std::setw(11) << instances << std::scientific << std::setprecision(3)
                << double(worst) << "    " << std::setprecision(0) << eps << "      "
                << (pass ? "ok" : "FAIL");
            std::cout << row.str() << "\n";
        }
    }
    return ok ? 0 : 3;
}

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 const std::string& format) {
    RunConfig config = load_config(config_path);
    BuiltData data = build_datasets(config.dataset);
    const fs::path outdir(out);
    fs::create_directories(outdir);
    if (format == "csv") {
        write_csv(data.source, (outdir / "source.csv").string());
        write_csv(data.target, (outdir / "target.csv").string());
    } else if (format == "bin") {
        // matrix with the label appended as a final column
        auto with_labels = [](const Dataset& d) {
            Matrix m(d.size(), d.dim() + 1);
            for (std::size_t r = 0; r < d.size(); ++r) {
                for (std::size_t c = 0; c < d.dim(); ++c) {
                    m(r, c) = d.features(r, c);
                }
                m(r, d.dim()) = d.labeled() ? real(d.labels[r]) : real(-1);
            }
            return m;
        };
        save_matrix(with_labels(data.source), (outdir / "source.bin").string());
        save_matrix(with_labels(data.target), (outdir / "target.bin").string());
    } else {
        throw ConfigError("gen-data: unknown format '" + format + "' (expected csv|bin)");
    }
    std::cout << "wrote " << data.source.size() << " source and " << data.target.size()
              << " target samples to " << out << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"online cross-domain adaptation on burn-after-read streams"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out = "out";
    std::vector<std::uint64_t> seeds;
    std::string save_model, load_model;

    CLI::App* run = app.add_subcommand("run", "one online run (or a stream-seed battery)");
    run->add_option("--config", config_path, "config file (json)")->required();
    run->add_option("--out", out, "output directory");
    run->add_option("--seeds", seeds, "stream seeds for a battery, e.g. 0,1,2,3,4")
        ->delimiter(',');
    run->add_option("--save-model", save_model, "write the final ensemble checkpoint here");
    run->add_option("--load-model", load_model, "start from this ensemble checkpoint");

    bool distinct_init = false;
    run->add_flag("--distinct-init", distinct_init, "give every learner its own init seed");

    std::string param;
    std::vector<double> values;
    CLI::App* sweep = app.add_subcommand("sweep", "rerun the config across one parameter");
    sweep->add_option("--config", config_path, "config file (json)")->required();
    sweep->add_option("--out", out, "output directory");
    sweep->add_option("--param", param, "tau | lambda | steps_per_query | query_size")->required();
    sweep->add_option("--values", values, "comma separated values")->delimiter(',');

    CLI::App* ablate = app.add_subcommand("ablate", "run the standard variant battery");
    ablate->add_option("--config", config_path, "config file (json)")->required();
    ablate->add_option("--out", out, "output directory");
    ablate->add_option("--seeds", seeds, "stream seeds, e.g. 0,1,2,3,4")->delimiter(',');

    double eps = 1e-4;
    double fd_step = 1e-5;
    int instances = 20;
    bool inject_bn_bug = false;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
    gradcheck->add_option("--eps", eps, "max relative error tolerance");
    gradcheck->add_option("--fd-step", fd_step, "central difference step");
    gradcheck->add_option("--instances", instances, "random instances per loss");
    gradcheck->add_flag("--inject-bn-bug", inject_bn_bug,
                        "detector self-test: corrupt the batch-norm backward");

    std::string format = "csv";
    CLI::App* gen = app.add_subcommand("gen-data", "emit the config's datasets as files");
    gen->add_option("--config", config_path, "config file (json)")->required();
    gen->add_option("--out", out, "output directory");
    gen->add_option("--format", format, "csv | bin");

    try {
        app.parse(argc, argv);
        if (run->parsed()) {
            return cmd_run(config_path, out, seeds, save_model, load_model, distinct_init);
        }
        if (sweep->parsed()) {
            return cmd_sweep(config_path, out, param, values);
        }
        if (ablate->parsed()) {
            return cmd_ablate(config_path, out, seeds);
        }
        if (gradcheck->parsed()) {
            return cmd_gradcheck(eps, fd_step, instances, inject_bn_bug);
        }
        if (gen->parsed()) {
            return cmd_gen_data(config_path, out, format);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::logic_error& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace crodobo
