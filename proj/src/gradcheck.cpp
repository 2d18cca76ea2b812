#include "crodobo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "crodobo/losses.hpp"

namespace crodobo {

const char* to_string(GradCheckLoss loss) {
    switch (loss) {
        case GradCheckLoss::source: return "source";
        case GradCheckLoss::exchange: return "exchange";
        case GradCheckLoss::entropy: return "entropy";
        case GradCheckLoss::diversity: return "diversity";
    }
    return "?";
}

namespace {

// Trainable arrays in the same canonical order for nets and gradients.
std::vector<std::pair<real*, std::size_t>> trainable_arrays(Network& net) {
    std::vector<std::pair<real*, std::size_t>> arrays;
    for (auto& d : net.dense) {
        arrays.emplace_back(d.weight.data(), d.weight.size());
        arrays.emplace_back(d.bias.data(), d.bias.size());
    }
    for (auto& b : net.bn) {
        arrays.emplace_back(b.gamma.data(), b.gamma.size());
        arrays.emplace_back(b.beta.data(), b.beta.size());
    }
    return arrays;
}

std::vector<std::pair<real*, std::size_t>> gradient_arrays(Gradients& g) {
    std::vector<std::pair<real*, std::size_t>> arrays;
    for (auto& d : g.dense) {
        arrays.emplace_back(d.weight.data(), d.weight.size());
        arrays.emplace_back(d.bias.data(), d.bias.size());
    }
    for (auto& b : g.bn) {
        arrays.emplace_back(b.gamma.data(), b.gamma.size());
        arrays.emplace_back(b.beta.data(), b.beta.size());
    }
    return arrays;
}

struct CheckInstance {
    Matrix input;               // the batch the loss sees
    std::vector<int> labels;    // source / exchange targets
    std::vector<bool> mask;     // exchange only
    GradCheckLoss loss;
};

real eval_loss(const Network& base, const CheckInstance& inst) {
    Network net = base;  // train-mode forward shifts running stats; keep the base pristine
    TrainForward fwd = forward_train(net, inst.input);
    switch (inst.loss) {
        case GradCheckLoss::source:
            return cross_entropy_loss(fwd.probs, inst.labels).value;
        case GradCheckLoss::exchange:
            return masked_cross_entropy(fwd.probs, inst.labels, inst.mask).value;
        case GradCheckLoss::entropy:
            return entropy_loss(fwd.probs).value;
        case GradCheckLoss::diversity:
            return diversity_loss(fwd.probs).value;
    }
    return 0;
}

}  // namespace

real grad_check(const NetworkSpec& spec, std::uint64_t seed, GradCheckLoss loss,
                const GradCheckOptions& options) {
    spec.validate();
    Network net = init_network(spec, mix_seed(seed, 0));
    Rng rng(mix_seed(seed, 1));

    CheckInstance inst;
    inst.loss = loss;
    inst.input = Matrix(options.batch_size, std::size_t(spec.input_dim));
    for (real& v : inst.input.storage()) {
        v = real(rng.normal());
    }
    inst.labels.resize(options.batch_size);
    for (int& y : inst.labels) {
        y = int(rng.index(std::size_t(spec.num_classes)));
    }
    if (loss == GradCheckLoss::exchange) {
        // Mixed mask: roughly half the rows selected, deterministic in seed.
        inst.mask.resize(options.batch_size);
        for (std::size_t r = 0; r < options.batch_size; ++r) {
            inst.mask[r] = rng.uniform() < 0.5;
        }
        inst.mask[0] = true;  // never fully masked out, the check would be vacuous
    }

    // Analytic gradients from one train-mode pass.
    Gradients analytic;
    {
        Network scratch = net;
        TrainForward fwd = forward_train(scratch, inst.input);
        LossValue lv;
        switch (loss) {
            case GradCheckLoss::source: lv = cross_entropy_loss(fwd.probs, inst.labels); break;
            case GradCheckLoss::exchange:
                lv = masked_cross_entropy(fwd.probs, inst.labels, inst.mask);
                break;
            case GradCheckLoss::entropy: lv = entropy_loss(fwd.probs); break;
            case GradCheckLoss::diversity: lv = diversity_loss(fwd.probs); break;
        }
        analytic = backward(scratch, fwd.cache, lv.prob_grad);
    }
    if (options.corrupt_bn_backward) {
        for (auto& b : analytic.bn) {
            for (real& g : b.gamma) g = -g;
            for (real& g : b.beta) g = -g;
        }
    }

    auto analytic_arrays = gradient_arrays(analytic);
    const real h = options.fd_step;
    real max_rel = 0;

    auto params = trainable_arrays(net);
    for (std::size_t a = 0; a < params.size(); ++a) {
        for (std::size_t i = 0; i < params[a].second; ++i) {
            const real saved = params[a].first[i];
            params[a].first[i] = saved + h;
            const real plus = eval_loss(net, inst);
            params[a].first[i] = saved - h;
            const real minus = eval_loss(net, inst);
            params[a].first[i] = saved;

            const real numeric = (plus - minus) / (2 * h);
            const real exact = analytic_arrays[a].first[i];
            const real denom = std::max({std::abs(numeric), std::abs(exact), real(1e-6)});
            max_rel = std::max(max_rel, std::abs(numeric - exact) / denom);
        }
    }
    return max_rel;
}

}  // namespace crodobo
