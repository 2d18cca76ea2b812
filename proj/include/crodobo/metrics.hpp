#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crodobo/data.hpp"
#include "crodobo/engine.hpp"

namespace crodobo {

// The one gate to hidden target labels. Engine code never touches it; only
// evaluation reads through here.
struct LabelAccess {
    static const std::vector<int>& values(const HiddenLabels& labels) { return labels.values_; }
    // Test hook for the label-isolation audit.
    static std::vector<int>& mutable_values(HiddenLabels& labels) { return labels.values_; }
};

// Everything a finished (or running) stream produced: one outcome per query,
// in order, plus the sealed labels the evaluation needs.
class RunTrace {
public:
    RunTrace(int num_classes, std::size_t expected_queries, std::size_t expected_samples)
        : num_classes_(num_classes),
          expected_queries_(expected_queries),
          expected_samples_(expected_samples) {}

    void append(QueryOutcome outcome, HiddenLabels labels);

    const std::vector<QueryOutcome>& outcomes() const { return outcomes_; }
    const std::vector<HiddenLabels>& hidden_labels() const { return hidden_; }
    std::vector<HiddenLabels>& hidden_labels() { return hidden_; }

    int num_classes() const { return num_classes_; }
    std::size_t expected_queries() const { return expected_queries_; }
    std::size_t total_samples() const;
    bool complete() const;

private:
    std::vector<QueryOutcome> outcomes_;
    std::vector<HiddenLabels> hidden_;
    int num_classes_ = 0;
    std::size_t expected_queries_ = 0;
    std::size_t expected_samples_ = 0;
};

// Sample-weighted accuracy of the adapt-then-test predictions over the whole
// stream; query_weighted averages per-query accuracies instead.
double online_average(const RunTrace& trace, bool query_weighted = false);

std::vector<double> per_query_accuracy(const RunTrace& trace);

struct OnePass {
    double overall = 0;
    std::vector<double> per_class;  // recall per class; -1 when unsupported
    double class_average = 0;       // mean over classes with support
};

// Frozen eval-mode ensemble accuracy over the harness-retained target copy.
// Passing the stream enforces the post-stream contract.
OnePass one_pass(const LearnerEnsemble& ensemble, const Dataset& held_target,
                 const TargetStream* stream = nullptr);

struct MetricsReport {
    double online_average = 0;
    double online_average_query_weighted = 0;
    double one_pass_overall = 0;
    double one_pass_class_average = 0;
    std::vector<double> one_pass_per_class;
    std::vector<double> per_query_accuracy;
    std::vector<std::size_t> per_query_sizes;
    std::vector<double> acceptance_rate;  // accepted pseudo-labels / (B * K), per query
    std::size_t n_target = 0;
    double wall_seconds = 0;
    std::uint64_t stream_seed = 0;
    std::string config_fingerprint;  // run config with the stream seed blanked
};

MetricsReport build_report(const RunTrace& trace, const OnePass& op);

struct SeedStat {
    double mean = 0;
    double population_variance = 0;  // sum((x-mean)^2)/n
};

struct SeedAggregate {
    std::size_t runs = 0;
    SeedStat online;
    SeedStat one_pass_overall;
    SeedStat one_pass_class_average;
};

// Mean and population variance over stream-permutation reruns. All reports
// must come from the same config (fingerprints must match).
SeedAggregate aggregate_seeds(const std::vector<MetricsReport>& reports);

}  // namespace crodobo
