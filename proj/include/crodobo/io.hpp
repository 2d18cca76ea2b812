#pragma once

#include <string>

#include "crodobo/engine.hpp"
#include "crodobo/metrics.hpp"

namespace crodobo {

// Network checkpoints: self-describing binary, magic "CRDB", spec as JSON,
// then every state array (weights, biases, gamma, beta, running stats) as
// little-endian float64 in layer order.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// Ensemble checkpoints: magic "CRDE", learner count, then the networks.
// Optimizer state and rng streams are not part of a checkpoint.
void save_ensemble(const LearnerEnsemble& ensemble, const std::string& path);
// Rebuilds the ensemble around the stored networks; optimizer and augment
// streams start fresh from the given seeds.
LearnerEnsemble load_ensemble(const std::string& path, const AdamConfig& adam,
                              std::uint64_t augment_seed);

// One QueryOutcome per line; deterministic content (no timestamps), so a
// rerun of the same manifest produces byte-identical output.
void write_trace_jsonl(const RunTrace& trace, const std::string& path);

void write_report_json(const MetricsReport& report, const std::string& path);
// Flat one-row CSV for table assembly across runs.
void write_report_csv(const MetricsReport& report, const std::string& path);
void write_per_query_csv(const MetricsReport& report, const std::string& path);

std::uint64_t fnv1a_file(const std::string& path);
std::uint64_t fnv1a_bytes(const void* data, std::size_t size);

}  // namespace crodobo
