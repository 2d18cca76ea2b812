#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crodobo/augment.hpp"
#include "crodobo/data.hpp"
#include "crodobo/losses.hpp"
#include "crodobo/net.hpp"

namespace crodobo {

// crodobo:     K co-trained learners, bootstrapped source batches, pseudo-label
//              exchange, entropy and diversity terms.
// single:      one learner; the exchange term uses its own pseudo-labels.
// source_only: one learner trained with the supervised source term alone.
// continual:   no source access; target-only objectives on K learners.
enum class RunMode { crodobo, single, source_only, continual };

const char* to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

struct HyperParams {
    real tau = real(0.95);
    real lambda = real(0.4);
    int steps_per_query = 1;  // 0 = frozen-model diagnostic mode
    RunMode mode = RunMode::crodobo;
    int num_learners = 2;
    // Ablation switches; a disabled term is skipped entirely, never added as
    // a zero matrix, so ablations are bit-exact.
    bool use_exchange = true;
    bool use_entropy = true;
    bool use_diversity = true;

    void validate() const;
    // single and source_only run exactly one learner regardless of K.
    int effective_learners() const;
    bool uses_source() const {
        return mode != RunMode::continual;
    }
};

struct Learner {
    Network net;
    OptimizerState opt;
    Rng augment_rng;  // strong views and (configured) source jitter
};

struct LearnerEnsemble {
    NetworkSpec spec;
    std::vector<Learner> learners;
    Rng weak_rng;  // the shared weak view of each target query

    // Learners share one initialization by default; distinct_init derives a
    // separate init seed per learner.
    static LearnerEnsemble create(const NetworkSpec& spec, const AdamConfig& adam, int k,
                                  std::uint64_t init_seed, std::uint64_t augment_seed,
                                  bool distinct_init = false);
    std::size_t size() const { return learners.size(); }
};

struct LearnerLosses {
    real source = 0;
    real exchange = 0;
    real entropy = 0;
    real diversity = 0;
    std::size_t accepted = 0;  // peer pseudo-labels above the confidence threshold
};

struct QueryOutcome {
    std::int64_t query_index = -1;
    Matrix ensemble_probs;               // eval-mode, post-update (adapt-then-test)
    std::vector<int> predicted;          // argmax, lowest index wins ties
    std::vector<LearnerLosses> losses;   // per learner, from the last adapt step
    std::vector<std::int64_t> learner_steps;  // optimizer step counters at test time
};

// Label-stripped view of a query; all the engine ever sees of target data.
struct QueryView {
    std::int64_t index;
    const Matrix& features;
};

inline QueryView view_of(const Query& q) { return {q.index(), q.features()}; }

struct AdaptOptions {
    HyperParams hp;
    WeakPolicy weak;
    AugmentPolicy strong;
    bool parallel = false;  // run per-learner updates on separate threads
};

// Mean of the learners' eval-mode probability outputs.
Matrix ensemble_predict(const LearnerEnsemble& ensemble, const Matrix& x);

std::vector<int> argmax_rows(const Matrix& probs);

// Supervised cross-entropy on a labeled batch through a train-mode forward.
std::pair<real, Gradients> source_loss(Network& net, const Batch& batch);

struct ExchangeResult {
    real loss = 0;
    std::optional<Gradients> grads;  // absent when every row is masked out
    std::size_t accepted = 0;
};

// Student trains on the teacher's confident hard pseudo-labels, evaluated on
// the strong view. The teacher only contributes constants, so no gradient can
// reach it. When nothing clears tau the strong view is not even forwarded.
ExchangeResult exchange_loss(Network& student, const Matrix& teacher_probs,
                             const Matrix& strong_view, real tau);

// One query's adapt-then-test cycle: steps_per_query accumulated updates
// followed by an eval-mode ensemble prediction on the raw query.
QueryOutcome adapt_query(LearnerEnsemble& ensemble, QueryView query,
                         const std::vector<Batch>& source_batches, const AdaptOptions& options);

}  // namespace crodobo
