#include "crodobo/engine.hpp"

#include <cmath>
#include <stdexcept>
#include <thread>

namespace crodobo {

const char* to_string(RunMode mode) {
    switch (mode) {
        case RunMode::crodobo: return "crodobo";
        case RunMode::single: return "single";
        case RunMode::source_only: return "source_only";
        case RunMode::continual: return "continual";
    }
    return "?";
}

RunMode run_mode_from_string(const std::string& name) {
    if (name == "crodobo") return RunMode::crodobo;
    if (name == "single") return RunMode::single;
    if (name == "source_only") return RunMode::source_only;
    if (name == "continual") return RunMode::continual;
    throw std::invalid_argument("unknown run mode '" + name +
                                "' (expected crodobo|single|source_only|continual)");
}

void HyperParams::validate() const {
    if (!(tau > 0 && tau <= 1)) {
        throw std::invalid_argument("HyperParams.tau: must be in (0, 1], got " +
                                    std::to_string(double(tau)));
    }
    if (lambda < 0) {
        throw std::invalid_argument("HyperParams.lambda: must be >= 0, got " +
                                    std::to_string(double(lambda)));
    }
    if (steps_per_query < 0) {
        throw std::invalid_argument("HyperParams.steps_per_query: must be >= 0");
    }
    if (num_learners < 1) {
        throw std::invalid_argument("HyperParams.num_learners: must be >= 1");
    }
}

int HyperParams::effective_learners() const {
    if (mode == RunMode::single || mode == RunMode::source_only) {
        return 1;
    }
    return num_learners;
}

LearnerEnsemble LearnerEnsemble::create(const NetworkSpec& spec, const AdamConfig& adam, int k,
                                        std::uint64_t init_seed, std::uint64_t augment_seed,
                                        bool distinct_init) {
    if (k < 1) {
        throw std::invalid_argument("LearnerEnsemble: need at least one learner");
    }
    LearnerEnsemble ens{spec, {}, Rng(mix_seed(augment_seed, 0xfeed))};
    ens.learners.reserve(std::size_t(k));
    for (int i = 0; i < k; ++i) {
        const std::uint64_t seed = distinct_init ? mix_seed(init_seed, std::uint64_t(i)) : init_seed;
        Network net = init_network(spec, seed);
        OptimizerState opt = OptimizerState::create(net, adam);
        ens.learners.push_back(
            Learner{std::move(net), std::move(opt), Rng(mix_seed(augment_seed, std::uint64_t(i)))});
    }
    return ens;
}

Matrix ensemble_predict(const LearnerEnsemble& ensemble, const Matrix& x) {
    if (ensemble.learners.empty()) {
        throw std::invalid_argument("ensemble_predict: empty ensemble");
    }
    Matrix mean = forward_eval(ensemble.learners.front().net, x);
    for (std::size_t k = 1; k < ensemble.learners.size(); ++k) {
        const Matrix p = forward_eval(ensemble.learners[k].net, x);
        for (std::size_t i = 0; i < mean.size(); ++i) {
            mean.data()[i] += p.data()[i];
        }
    }
    const real inv_k = real(1) / real(ensemble.learners.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
        mean.data()[i] *= inv_k;
    }
    return mean;
}

std::vector<int> argmax_rows(const Matrix& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const real* row = probs.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c) {
            if (row[c] > row[best]) {
                best = c;
            }
        }
        out[r] = int(best);
    }
    return out;
}

std::pair<real, Gradients> source_loss(Network& net, const Batch& batch) {
    if (!batch.size() || batch.labels.size() != batch.size()) {
        throw std::invalid_argument("source_loss: batch must carry labels");
    }
    TrainForward fwd = forward_train(net, batch.features);
    LossValue lv = cross_entropy_loss(fwd.probs, batch.labels);
    return {lv.value, backward(net, fwd.cache, lv.prob_grad)};
}

ExchangeResult exchange_loss(Network& student, const Matrix& teacher_probs,
                             const Matrix& strong_view, real tau) {
    if (teacher_probs.rows() != strong_view.rows()) {
        throw std::invalid_argument("exchange_loss: teacher and strong view batch sizes differ");
    }
    PseudoLabels pl = pseudo_labels(teacher_probs, tau);
    ExchangeResult result;
    result.accepted = pl.accepted;
    if (pl.accepted == 0) {
        // Nothing cleared the threshold: the term vanishes and the strong
        // view is not even forwarded, so the update is bit-identical to one
        // without the exchange term.
        return result;
    }
    TrainForward fwd = forward_train(student, strong_view);
    LossValue lv = masked_cross_entropy(fwd.probs, pl.labels, pl.mask);
    result.loss = lv.value;
    result.grads = backward(student, fwd.cache, lv.prob_grad);
    return result;
}

namespace {

struct StepShared {
    const Matrix* weak_view = nullptr;
    std::vector<Matrix> weak_probs;
    std::vector<ForwardCache> weak_caches;
    bool target_terms = false;
};

// Per-learner gradient accumulation and Adam step; phase B of one adapt step.
// Touches only learner k's state, so learners can run concurrently.
void learner_update(LearnerEnsemble& ensemble, std::size_t k, const QueryView& query,
                    const std::vector<Batch>& source_batches, const AdaptOptions& options,
                    StepShared& shared, LearnerLosses& losses_out) {
    const HyperParams& hp = options.hp;
    Learner& learner = ensemble.learners[k];
    LearnerLosses losses;
    std::optional<Gradients> total;
    auto accumulate = [&total](Gradients&& g) {
        if (total) {
            total->add(g);
        } else {
            total = std::move(g);
        }
    };

    if (hp.uses_source()) {
        const Batch& raw = source_batches[k];
        Batch batch{weak_augment(raw.features, options.weak, learner.augment_rng), raw.labels};
        auto [value, grads] = source_loss(learner.net, batch);
        losses.source = value;
        accumulate(std::move(grads));
    }

    if (shared.target_terms) {
        if (hp.use_exchange) {
            // K=2 exchanges crosswise; a lone learner supervises itself.
            const std::size_t teacher = ensemble.size() > 1 ? (k + 1) % ensemble.size() : k;
            const Matrix strong = strong_augment(query.features, options.strong, learner.augment_rng);
            ExchangeResult ex = exchange_loss(learner.net, shared.weak_probs[teacher], strong, hp.tau);
            losses.exchange = ex.loss;
            losses.accepted = ex.accepted;
            if (ex.grads) {
                accumulate(std::move(*ex.grads));
            }
        }

        LossValue ent;
        LossValue div;
        if (hp.use_entropy) {
            ent = entropy_loss(shared.weak_probs[k]);
            losses.entropy = ent.value;
        }
        if (hp.use_diversity) {
            div = diversity_loss(shared.weak_probs[k]);
            losses.diversity = div.value;
        }
        const bool ent_grad = hp.use_entropy;
        const bool div_grad = hp.use_diversity && hp.lambda != 0;
        if (ent_grad && div_grad) {
            Matrix dp = ent.prob_grad;
            for (std::size_t i = 0; i < dp.size(); ++i) {
                dp.data()[i] += hp.lambda * div.prob_grad.data()[i];
            }
            accumulate(backward(learner.net, shared.weak_caches[k], dp));
        } else if (ent_grad) {
            accumulate(backward(learner.net, shared.weak_caches[k], ent.prob_grad));
        } else if (div_grad) {
            Matrix dp = div.prob_grad;
            for (real& v : dp.storage()) {
                v *= hp.lambda;
            }
            accumulate(backward(learner.net, shared.weak_caches[k], dp));
        }
    }

    // One accumulated gradient, one optimizer step. A step with no live terms
    // is skipped rather than applied as a zero update.
    if (total) {
        adam_step(learner.net, *total, learner.opt);
    }
    losses_out = losses;
}

template <typename Fn>
void for_each_learner(std::size_t count, bool parallel, Fn&& fn) {
    if (!parallel || count < 2) {
        for (std::size_t k = 0; k < count; ++k) {
            fn(k);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    auto guarded = [&](std::size_t k) {
        try {
            fn(k);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    };
    std::vector<std::thread> workers;
    workers.reserve(count - 1);
    for (std::size_t k = 1; k < count; ++k) {
        workers.emplace_back(guarded, k);
    }
    guarded(0);
    for (auto& w : workers) {
        w.join();
    }
    for (const std::exception_ptr& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace

QueryOutcome adapt_query(LearnerEnsemble& ensemble, QueryView query,
                         const std::vector<Batch>& source_batches, const AdaptOptions& options) {
    const HyperParams& hp = options.hp;
    hp.validate();
    const std::size_t k = ensemble.size();
    if (std::size_t(hp.effective_learners()) != k) {
        throw std::invalid_argument("adapt_query: ensemble has " + std::to_string(k) +
                                    " learners, mode expects " +
                                    std::to_string(hp.effective_learners()));
    }
    if (hp.uses_source() && source_batches.size() != k) {
        throw std::invalid_argument("adapt_query: mode needs " + std::to_string(k) +
                                    " source batches, got " + std::to_string(source_batches.size()));
    }
    if (!hp.uses_source() && !source_batches.empty()) {
        throw std::invalid_argument("adapt_query: continual mode takes no source batches");
    }
    if (query.features.rows() == 0) {
        throw std::invalid_argument("adapt_query: empty query");
    }

    QueryOutcome outcome;
    outcome.query_index = query.index;
    outcome.losses.assign(k, LearnerLosses{});

    // Target-side terms need batch statistics; a stray size-1 query (for
    // example a final partial query) still gets its source update and test.
    const bool target_pass = hp.mode != RunMode::source_only && query.features.rows() >= 2;
    for (int step = 0; step < hp.steps_per_query; ++step) {
        StepShared shared;
        shared.target_terms = target_pass;
        Matrix weak_view;
        if (target_pass) {
            weak_view = weak_augment(query.features, options.weak, ensemble.weak_rng);
            shared.weak_view = &weak_view;
            shared.weak_probs.resize(k);
            shared.weak_caches.resize(k);
            // Phase A: every learner predicts the shared weak view before any
            // of them updates; this is the pseudo-label exchange point.
            for_each_learner(k, options.parallel, [&](std::size_t i) {
                TrainForward fwd = forward_train(ensemble.learners[i].net, *shared.weak_view);
                shared.weak_probs[i] = std::move(fwd.probs);
                shared.weak_caches[i] = std::move(fwd.cache);
            });
        }
        // Phase B: independent accumulation + Adam step per learner.
        for_each_learner(k, options.parallel, [&](std::size_t i) {
            learner_update(ensemble, i, query, source_batches, options, shared,
                           outcome.losses[i]);
        });
    }

    outcome.ensemble_probs = ensemble_predict(ensemble, query.features);
    outcome.predicted = argmax_rows(outcome.ensemble_probs);
    outcome.learner_steps.reserve(k);
    for (const Learner& l : ensemble.learners) {
        outcome.learner_steps.push_back(l.opt.step);
    }
    return outcome;
}

}  // namespace crodobo
