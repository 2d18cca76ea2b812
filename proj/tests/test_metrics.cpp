#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "crodobo/metrics.hpp"
#include "crodobo/runner.hpp"

using namespace crodobo;

namespace {

QueryOutcome fake_outcome(std::int64_t index, std::vector<int> predicted,
                          std::size_t accepted = 0) {
    QueryOutcome o;
    o.query_index = index;
    o.predicted = std::move(predicted);
    o.ensemble_probs = Matrix(o.predicted.size(), 2, real(0.5));
    o.losses.assign(1, LearnerLosses{});
    o.losses[0].accepted = accepted;
    return o;
}

// predictions[j] paired with truths[j] per query
RunTrace fake_trace(const std::vector<std::vector<int>>& predictions,
                    const std::vector<std::vector<int>>& truths) {
    std::size_t samples = 0;
    for (const auto& p : predictions) {
        samples += p.size();
    }
    RunTrace trace(2, predictions.size(), samples);
    for (std::size_t j = 0; j < predictions.size(); ++j) {
        trace.append(fake_outcome(std::int64_t(j), predictions[j]), HiddenLabels(truths[j]));
    }
    return trace;
}

Network constant_net(int input_dim, const std::vector<double>& probs) {
    NetworkSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_dims = {};
    spec.num_classes = int(probs.size());
    Network net = init_network(spec, 0);
    net.dense[0].weight.fill(0);
    for (std::size_t c = 0; c < probs.size(); ++c) {
        net.dense[0].bias[c] = real(std::log(probs[c]));
    }
    return net;
}

LearnerEnsemble single_ensemble(Network net) {
    LearnerEnsemble ens{net.spec, {}, Rng(0)};
    OptimizerState opt = OptimizerState::create(net, {});
    ens.learners.push_back(Learner{std::move(net), std::move(opt), Rng(0)});
    return ens;
}

}  // namespace

TEST_CASE("online average: sample weighted hand values") {
    // two queries of 64, accuracies 0.5 and 1.0
    std::vector<int> half(64, 0);
    std::vector<int> truth_half(64, 0);
    for (std::size_t i = 0; i < 32; ++i) {
        truth_half[i] = 1;  // 32 of 64 wrong
    }
    std::vector<int> perfect(64, 1);
    RunTrace trace = fake_trace({half, perfect}, {truth_half, perfect});
    CHECK(online_average(trace) == doctest::Approx(0.75).epsilon(1e-15));

    // sizes 64 and 2, accuracies 1.0 and 0.0: sample weighting gives 64/66
    std::vector<int> ok(64, 1);
    std::vector<int> bad = {0, 0};
    std::vector<int> bad_truth = {1, 1};
    RunTrace uneven = fake_trace({ok, bad}, {ok, bad_truth});
    CHECK(online_average(uneven) == doctest::Approx(64.0 / 66.0).epsilon(1e-15));
    CHECK(online_average(uneven, /*query_weighted=*/true) == doctest::Approx(0.5).epsilon(1e-15));

    // all correct
    RunTrace all = fake_trace({ok}, {ok});
    CHECK(online_average(all) == 1.0);
}

TEST_CASE("online average is invariant to query re-chunking") {
    std::vector<int> pred = {0, 1, 1, 0, 1, 0, 0, 1, 1, 1};
    std::vector<int> truth = {0, 1, 0, 0, 1, 1, 0, 1, 0, 1};
    auto chunk = [&](const std::vector<std::size_t>& sizes) {
        std::vector<std::vector<int>> p, t;
        std::size_t at = 0;
        for (std::size_t s : sizes) {
            p.push_back({pred.begin() + at, pred.begin() + at + s});
            t.push_back({truth.begin() + at, truth.begin() + at + s});
            at += s;
        }
        return fake_trace(p, t);
    };
    const double a = online_average(chunk({10}));
    const double b = online_average(chunk({3, 3, 4}));
    const double c = online_average(chunk({1, 1, 1, 1, 1, 1, 1, 1, 1, 1}));
    CHECK(a == b);
    CHECK(b == c);
}

TEST_CASE("online average refuses an incomplete trace") {
    RunTrace trace(2, 3, 10);
    trace.append(fake_outcome(0, {0, 1}), HiddenLabels({0, 1}));
    CHECK(!trace.complete());
    CHECK_THROWS_AS(online_average(trace), std::logic_error);
}

TEST_CASE("trace enforces ordered unique query indices") {
    RunTrace trace(2, 3, 6);
    trace.append(fake_outcome(0, {0, 1}), HiddenLabels({0, 1}));
    CHECK_THROWS_AS(trace.append(fake_outcome(0, {0, 1}), HiddenLabels({0, 1})),
                    std::logic_error);
    CHECK_THROWS_AS(trace.append(fake_outcome(2, {0, 1}), HiddenLabels({0, 1})),
                    std::logic_error);
}

TEST_CASE("one pass: constant predictor on balanced and imbalanced data") {
    LearnerEnsemble ens = single_ensemble(constant_net(3, {0.7, 0.1, 0.1, 0.1}));

    Dataset balanced;
    balanced.num_classes = 4;
    balanced.features = Matrix(400, 3, real(0.5));
    balanced.labels.resize(400);
    for (std::size_t i = 0; i < 400; ++i) {
        balanced.labels[i] = int(i % 4);
    }
    OnePass op = one_pass(ens, balanced);
    CHECK(op.overall == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(op.class_average == doctest::Approx(0.25).epsilon(1e-15));

    // 90/10 two-class data, constant majority vote
    LearnerEnsemble maj = single_ensemble(constant_net(3, {0.9, 0.1}));
    Dataset skewed;
    skewed.num_classes = 2;
    skewed.features = Matrix(100, 3, real(0.5));
    skewed.labels.assign(100, 0);
    for (std::size_t i = 90; i < 100; ++i) {
        skewed.labels[i] = 1;
    }
    OnePass op2 = one_pass(maj, skewed);
    CHECK(op2.overall == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(op2.class_average == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(op2.per_class[0] == doctest::Approx(1.0));
    CHECK(op2.per_class[1] == doctest::Approx(0.0));
}

TEST_CASE("one pass: class average equals overall accuracy on balanced data") {
    Rng rng(90);
    for (int trial = 0; trial < 10; ++trial) {
        NetworkSpec spec;
        spec.input_dim = 3;
        spec.hidden_dims = {6};
        spec.num_classes = 4;
        LearnerEnsemble ens{spec, {}, Rng(0)};
        Network net = init_network(spec, rng.engine()());
        ens.learners.push_back(Learner{net, OptimizerState::create(net, {}), Rng(0)});

        Dataset balanced;
        balanced.num_classes = 4;
        balanced.features = Matrix(200, 3);
        for (real& v : balanced.features.storage()) v = real(rng.normal());
        balanced.labels.resize(200);
        for (std::size_t i = 0; i < 200; ++i) {
            balanced.labels[i] = int(i % 4);
        }
        OnePass op = one_pass(ens, balanced);
        CHECK(std::abs(op.class_average - op.overall) < 1e-12);
    }
}

TEST_CASE("one pass refuses to run mid-stream") {
    TwoMoonsParams params;
    params.n_source = 64;
    params.n_target = 128;
    params.seed = 31;
    auto [source, target] = gen_two_moons_shift(params);
    TargetStream stream(target, 64, 1);
    stream.next();  // one of two queries consumed

    LearnerEnsemble ens = single_ensemble(constant_net(2, {0.5, 0.5}));
    CHECK_THROWS_AS(one_pass(ens, target, &stream), std::logic_error);
    stream.next();
    CHECK_NOTHROW(one_pass(ens, target, &stream));
}

TEST_CASE("seed aggregation: mean and population variance") {
    auto report_with = [](double online) {
        MetricsReport r;
        r.online_average = online;
        r.one_pass_overall = online;
        r.one_pass_class_average = online;
        r.config_fingerprint = "cfg";
        return r;
    };

    std::vector<MetricsReport> same(3, report_with(0.5));
    SeedAggregate agg = aggregate_seeds(same);
    CHECK(agg.online.mean == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(agg.online.population_variance == 0.0);

    // five stream perturbations; population variance = sum((x-m)^2)/5
    std::vector<MetricsReport> five = {report_with(79.4), report_with(78.6), report_with(79.6),
                                       report_with(79.2), report_with(79.4)};
    SeedAggregate spread = aggregate_seeds(five);
    CHECK(spread.online.mean == doctest::Approx(79.24).epsilon(1e-12));
    CHECK(spread.online.population_variance == doctest::Approx(0.1184).epsilon(1e-9));

    std::vector<MetricsReport> pair = {report_with(0.0), report_with(1.0)};
    CHECK(aggregate_seeds(pair).online.mean == doctest::Approx(0.5).epsilon(1e-15));

    std::vector<MetricsReport> mixed = {report_with(0.1), report_with(0.2)};
    mixed[1].config_fingerprint = "other";
    CHECK_THROWS_AS(aggregate_seeds(mixed), std::invalid_argument);
    CHECK_THROWS_AS(aggregate_seeds({report_with(0.1)}), std::invalid_argument);
}

TEST_CASE("run_online covers the whole stream") {
    BlobsParams params;
    params.classes = 2;
    params.n_per_class = 65;  // 130 target samples
    params.seed = 40;
    auto [source, target] = gen_class_shift_blobs(params);

    RunOptions options;
    options.model.input_dim = int(source.dim());
    options.model.num_classes = 2;
    options.model.hidden_dims = {8};
    options.hp.mode = RunMode::crodobo;
    options.query_size = 64;

    TargetStream stream(target, 64, options.seeds.stream);
    RunResult result = run_online(source, stream, options);
    CHECK(result.trace.outcomes().size() == 3);
    CHECK(result.trace.total_samples() == 130);
    CHECK(result.trace.complete());
    CHECK(stream.exhausted());
    // adapt-then-test: outcome j carries (j+1) * steps_per_query optimizer steps
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::int64_t steps : result.trace.outcomes()[j].learner_steps) {
            CHECK(steps == std::int64_t(j + 1));
        }
    }
    CHECK(result.wall_seconds > 0);
}

TEST_CASE("run_online: parallel and serial traces are bit-identical") {
    TwoMoonsParams params;
    params.n_source = 256;
    params.n_target = 192;
    params.rotation_deg = 30;
    params.seed = 41;
    auto [source, target] = gen_two_moons_shift(params);

    RunOptions serial;
    serial.model.input_dim = 2;
    serial.model.num_classes = 2;
    serial.model.hidden_dims = {8, 6};
    serial.hp.mode = RunMode::crodobo;
    serial.hp.steps_per_query = 2;
    serial.query_size = 64;
    RunOptions parallel = serial;
    parallel.parallel_learners = true;

    RunResult a = run_online(source, target, serial);
    RunResult b = run_online(source, target, parallel);
    REQUIRE(a.trace.outcomes().size() == b.trace.outcomes().size());
    for (std::size_t j = 0; j < a.trace.outcomes().size(); ++j) {
        CHECK(a.trace.outcomes()[j].ensemble_probs == b.trace.outcomes()[j].ensemble_probs);
        CHECK(a.trace.outcomes()[j].predicted == b.trace.outcomes()[j].predicted);
    }
    for (std::size_t k = 0; k < a.ensemble.size(); ++k) {
        CHECK(a.ensemble.learners[k].net == b.ensemble.learners[k].net);
    }
}

TEST_CASE("the engine never reads target labels") {
    TwoMoonsParams params;
    params.n_source = 128;
    params.n_target = 128;
    params.seed = 42;
    auto [source, target] = gen_two_moons_shift(params);

    Dataset corrupted = target;
    for (int& y : corrupted.labels) {
        y = 1 - y;  // flip every hidden label
    }

    RunOptions options;
    options.model.input_dim = 2;
    options.model.num_classes = 2;
    options.model.hidden_dims = {8};
    options.hp.mode = RunMode::crodobo;
    options.query_size = 32;

    RunResult a = run_online(source, target, options);
    RunResult b = run_online(source, corrupted, options);
    REQUIRE(a.trace.outcomes().size() == b.trace.outcomes().size());
    for (std::size_t j = 0; j < a.trace.outcomes().size(); ++j) {
        CHECK(a.trace.outcomes()[j].ensemble_probs == b.trace.outcomes()[j].ensemble_probs);
    }
    // the labels only change the evaluation
    CHECK(online_average(a.trace) == doctest::Approx(1.0 - online_average(b.trace)).epsilon(1e-12));
}

TEST_CASE("frozen model: one pass equals online average exactly") {
    TwoMoonsParams params;
    params.n_source = 128;
    params.n_target = 200;
    params.rotation_deg = 20;
    params.seed = 43;
    auto [source, target] = gen_two_moons_shift(params);

    RunOptions options;
    options.model.input_dim = 2;
    options.model.num_classes = 2;
    options.model.hidden_dims = {8};
    options.hp.mode = RunMode::crodobo;
    options.hp.steps_per_query = 0;  // diagnostic: never update
    options.query_size = 64;

    TargetStream stream(target, 64, options.seeds.stream);
    RunResult result = run_online(source, stream, options);
    OnePass op = one_pass(result.ensemble, target, &stream);
    CHECK(online_average(result.trace) == op.overall);
}

TEST_CASE("metrics do not mutate the trace or the ensemble") {
    TwoMoonsParams params;
    params.n_source = 64;
    params.n_target = 64;
    params.seed = 44;
    auto [source, target] = gen_two_moons_shift(params);

    RunOptions options;
    options.model.input_dim = 2;
    options.model.num_classes = 2;
    options.model.hidden_dims = {6};
    options.query_size = 32;

    RunResult result = run_online(source, target, options);
    const double first = online_average(result.trace);
    const double second = online_average(result.trace);
    CHECK(first == second);
    Network snapshot = result.ensemble.learners[0].net;
    one_pass(result.ensemble, target);
    CHECK(result.ensemble.learners[0].net == snapshot);
}

TEST_CASE("build_report carries the series") {
    std::vector<int> q0 = {0, 1, 1, 0};
    std::vector<int> t0 = {0, 1, 0, 0};
    std::vector<int> q1 = {1, 1};
    std::vector<int> t1 = {1, 0};
    RunTrace trace = fake_trace({q0, q1}, {t0, t1});
    OnePass op;
    op.overall = 0.5;
    op.class_average = 0.5;
    MetricsReport report = build_report(trace, op);
    CHECK(report.per_query_accuracy == std::vector<double>{0.75, 0.5});
    CHECK(report.per_query_sizes == std::vector<std::size_t>{4, 2});
    CHECK(report.n_target == 6);
    CHECK(report.online_average == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
}
