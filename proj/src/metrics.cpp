#include "crodobo/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace crodobo {

void RunTrace::append(QueryOutcome outcome, HiddenLabels labels) {
    if (outcome.query_index != std::int64_t(outcomes_.size())) {
        throw std::logic_error("RunTrace::append: expected query " +
                               std::to_string(outcomes_.size()) + ", got " +
                               std::to_string(outcome.query_index));
    }
    if (labels.size() != outcome.predicted.size()) {
        throw std::logic_error("RunTrace::append: label count does not match predictions");
    }
    outcomes_.push_back(std::move(outcome));
    hidden_.push_back(std::move(labels));
}

std::size_t RunTrace::total_samples() const {
    std::size_t n = 0;
    for (const auto& o : outcomes_) {
        n += o.predicted.size();
    }
    return n;
}

bool RunTrace::complete() const {
    return outcomes_.size() == expected_queries_ && total_samples() == expected_samples_;
}

namespace {

std::size_t correct_count(const QueryOutcome& outcome, const HiddenLabels& labels) {
    const std::vector<int>& truth = LabelAccess::values(labels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (outcome.predicted[i] == truth[i]) {
            ++correct;
        }
    }
    return correct;
}

}  // namespace

double online_average(const RunTrace& trace, bool query_weighted) {
    if (!trace.complete()) {
        throw std::logic_error("online_average: trace is incomplete (" +
                               std::to_string(trace.outcomes().size()) + "/" +
                               std::to_string(trace.expected_queries()) + " queries)");
    }
    if (query_weighted) {
        double sum = 0;
        for (std::size_t j = 0; j < trace.outcomes().size(); ++j) {
            const std::size_t n = trace.outcomes()[j].predicted.size();
            sum += double(correct_count(trace.outcomes()[j], trace.hidden_labels()[j])) / double(n);
        }
        return sum / double(trace.outcomes().size());
    }
    std::size_t correct = 0;
    std::size_t total = 0;
    for (std::size_t j = 0; j < trace.outcomes().size(); ++j) {
        correct += correct_count(trace.outcomes()[j], trace.hidden_labels()[j]);
        total += trace.outcomes()[j].predicted.size();
    }
    return double(correct) / double(total);
}

std::vector<double> per_query_accuracy(const RunTrace& trace) {
    std::vector<double> acc;
    acc.reserve(trace.outcomes().size());
    for (std::size_t j = 0; j < trace.outcomes().size(); ++j) {
        const std::size_t n = trace.outcomes()[j].predicted.size();
        acc.push_back(double(correct_count(trace.outcomes()[j], trace.hidden_labels()[j])) /
                      double(n));
    }
    return acc;
}

OnePass one_pass(const LearnerEnsemble& ensemble, const Dataset& held_target,
                 const TargetStream* stream) {
    if (stream != nullptr && !stream->exhausted()) {
        throw std::logic_error("one_pass: called mid-stream (" +
                               std::to_string(stream->cursor()) + "/" +
                               std::to_string(stream->total_queries()) + " queries consumed)");
    }
    if (!held_target.labeled()) {
        throw std::invalid_argument("one_pass: held target set has no labels");
    }

    OnePass result;
    const int classes = held_target.num_classes;
    std::vector<std::size_t> support(std::size_t(classes), 0);
    std::vector<std::size_t> hits(std::size_t(classes), 0);
    std::size_t correct = 0;

    const std::size_t chunk = 4096;
    for (std::size_t begin = 0; begin < held_target.size(); begin += chunk) {
        const std::size_t end = std::min(begin + chunk, held_target.size());
        std::vector<std::size_t> rows(end - begin);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            rows[i] = begin + i;
        }
        const Matrix probs = ensemble_predict(ensemble, held_target.features.take_rows(rows));
        const std::vector<int> pred = argmax_rows(probs);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const int truth = held_target.labels[rows[i]];
            support[std::size_t(truth)] += 1;
            if (pred[i] == truth) {
                hits[std::size_t(truth)] += 1;
                ++correct;
            }
        }
    }

    result.overall = double(correct) / double(held_target.size());
    result.per_class.resize(std::size_t(classes), -1);
    double sum = 0;
    int supported = 0;
    for (int c = 0; c < classes; ++c) {
        if (support[std::size_t(c)] > 0) {
            result.per_class[std::size_t(c)] =
                double(hits[std::size_t(c)]) / double(support[std::size_t(c)]);
            sum += result.per_class[std::size_t(c)];
            ++supported;
        }
    }
    result.class_average = supported > 0 ? sum / double(supported) : 0;
    return result;
}

MetricsReport build_report(const RunTrace& trace, const OnePass& op) {
    MetricsReport report;
    report.online_average = online_average(trace, false);
    report.online_average_query_weighted = online_average(trace, true);
    report.one_pass_overall = op.overall;
    report.one_pass_class_average = op.class_average;
    report.one_pass_per_class = op.per_class;
    report.per_query_accuracy = per_query_accuracy(trace);
    report.n_target = trace.total_samples();
    for (const QueryOutcome& o : trace.outcomes()) {
        report.per_query_sizes.push_back(o.predicted.size());
        std::size_t accepted = 0;
        for (const LearnerLosses& l : o.losses) {
            accepted += l.accepted;
        }
        const double denom = double(o.predicted.size()) * double(o.losses.size());
        report.acceptance_rate.push_back(denom > 0 ? double(accepted) / denom : 0.0);
    }
    return report;
}

namespace {

SeedStat stat_of(const std::vector<double>& values) {
    SeedStat s;
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= double(values.size());
    for (double v : values) {
        const double d = v - s.mean;
        s.population_variance += d * d;
    }
    s.population_variance /= double(values.size());
    return s;
}

}  // namespace

SeedAggregate aggregate_seeds(const std::vector<MetricsReport>& reports) {
    if (reports.size() < 2) {
        throw std::invalid_argument("aggregate_seeds: need at least 2 reports, got " +
                                    std::to_string(reports.size()));
    }
    for (const MetricsReport& r : reports) {
        if (r.config_fingerprint != reports.front().config_fingerprint) {
            throw std::invalid_argument(
                "aggregate_seeds: mixed configs (fingerprints differ); reports must vary only in "
                "the stream seed");
        }
    }
    std::vector<double> online, op_overall, op_class;
    for (const MetricsReport& r : reports) {
        online.push_back(r.online_average);
        op_overall.push_back(r.one_pass_overall);
        op_class.push_back(r.one_pass_class_average);
    }
    SeedAggregate agg;
    agg.runs = reports.size();
    agg.online = stat_of(online);
    agg.one_pass_overall = stat_of(op_overall);
    agg.one_pass_class_average = stat_of(op_class);
    return agg;
}

}  // namespace crodobo
