#pragma once

#include <cstdint>

#include "crodobo/engine.hpp"
#include "crodobo/metrics.hpp"

namespace crodobo {

// Four independent randomness sources so a stream perturbation study varies
// exactly one of them.
struct Seeds {
    std::uint64_t init = 1;
    std::uint64_t stream = 2;
    std::uint64_t bootstrap = 3;
    std::uint64_t augment = 4;
    bool operator==(const Seeds&) const = default;
};

struct RunOptions {
    NetworkSpec model;  // input_dim / num_classes filled from the data
    AdamConfig adam;
    HyperParams hp;
    WeakPolicy weak;
    AugmentPolicy strong;
    Seeds seeds;
    std::size_t query_size = 64;
    bool parallel_learners = false;
    bool distinct_init = false;
};

struct RunResult {
    RunTrace trace;
    LearnerEnsemble ensemble;
    double wall_seconds = 0;
};

// The streaming protocol: next query -> adapt -> test -> record -> erase,
// until the stream is exhausted. An initial ensemble (e.g. from a checkpoint)
// replaces the seeded construction when given.
RunResult run_online(const Dataset& source, TargetStream& stream, const RunOptions& options,
                     std::optional<LearnerEnsemble> initial = {});

// Convenience overload that builds the stream from seeds.stream.
RunResult run_online(const Dataset& source, const Dataset& target, const RunOptions& options,
                     std::optional<LearnerEnsemble> initial = {});

}  // namespace crodobo
