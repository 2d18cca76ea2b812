#include "crodobo/runner.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

namespace crodobo {

RunResult run_online(const Dataset& source, TargetStream& stream, const RunOptions& options,
                     std::optional<LearnerEnsemble> initial) {
    options.hp.validate();
    options.model.validate();
    options.strong.validate();
    if (options.hp.uses_source()) {
        if (!source.labeled()) {
            throw std::invalid_argument("run_online: source dataset must be labeled");
        }
        if (source.dim() != std::size_t(options.model.input_dim)) {
            throw std::invalid_argument("run_online: source dim != model input_dim");
        }
    }

    const auto start = std::chrono::steady_clock::now();
    const int k = options.hp.effective_learners();
    if (initial) {
        if (!(initial->spec == options.model)) {
            throw std::invalid_argument("run_online: loaded ensemble spec differs from the config");
        }
        if (initial->size() != std::size_t(k)) {
            throw std::invalid_argument("run_online: loaded ensemble has " +
                                        std::to_string(initial->size()) + " learners, mode needs " +
                                        std::to_string(k));
        }
    }
    RunResult result{
        RunTrace(stream.num_classes(), stream.total_queries(), stream.total_samples()),
        initial ? std::move(*initial)
                : LearnerEnsemble::create(options.model, options.adam, k, options.seeds.init,
                                          options.seeds.augment, options.distinct_init),
        0.0};

    std::optional<SourcePool> pool;
    if (options.hp.uses_source()) {
        pool.emplace(source, options.seeds.bootstrap);
    }

    AdaptOptions adapt{options.hp, options.weak, options.strong, options.parallel_learners};
    while (auto query = stream.next()) {
        std::vector<Batch> batches;
        if (pool) {
            // Bootstrap batches match the query size (a degenerate 1-sample
            // query still needs 2 so batch statistics exist).
            batches = pool->bootstrap_batches(std::size_t(k),
                                              std::max<std::size_t>(query->size(), 2));
        }
        QueryOutcome outcome = adapt_query(result.ensemble, view_of(*query), batches, adapt);
        result.trace.append(std::move(outcome), query->take_labels());
        // `query` dies at the end of this scope: its feature buffer is wiped.
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

RunResult run_online(const Dataset& source, const Dataset& target, const RunOptions& options,
                     std::optional<LearnerEnsemble> initial) {
    TargetStream stream(target, options.query_size, options.seeds.stream);
    return run_online(source, stream, options, std::move(initial));
}

}  // namespace crodobo
