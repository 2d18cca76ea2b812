#include "crodobo/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace crodobo {

void NetworkSpec::validate() const {
    if (input_dim < 1) {
        throw std::invalid_argument("NetworkSpec.input_dim: must be >= 1, got " +
                                    std::to_string(input_dim));
    }
    if (num_classes < 2) {
        throw std::invalid_argument("NetworkSpec.num_classes: must be >= 2, got " +
                                    std::to_string(num_classes));
    }
    for (int h : hidden_dims) {
        if (h < 1) {
            throw std::invalid_argument("NetworkSpec.hidden_dims: dimensions must be >= 1, got " +
                                        std::to_string(h));
        }
    }
    if (!(bn_eps > 0)) {
        throw std::invalid_argument("NetworkSpec.batch_norm_eps: must be > 0");
    }
    if (!(bn_momentum > 0 && bn_momentum < 1)) {
        throw std::invalid_argument("NetworkSpec.batch_norm_momentum: must be in (0,1)");
    }
}

void AdamConfig::validate() const {
    if (!(learning_rate > 0)) {
        throw std::invalid_argument("AdamConfig.learning_rate: must be > 0");
    }
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
        throw std::invalid_argument("AdamConfig.beta1/beta2: must be in (0,1)");
    }
    if (!(epsilon > 0)) {
        throw std::invalid_argument("AdamConfig.epsilon: must be > 0");
    }
}

std::size_t Network::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& d : dense) {
        n += d.weight.size() + d.bias.size();
    }
    for (const auto& b : bn) {
        n += b.gamma.size() + b.beta.size();
    }
    return n;
}

namespace {

// Uniform in (-limit, limit), drawn row-major so layouts are reproducible.
void fill_uniform(Matrix& w, real limit, Rng& rng) {
    for (real& v : w.storage()) {
        v = real(rng.uniform(-double(limit), double(limit)));
    }
}

}  // namespace

Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Network net;
    net.spec = spec;
    Rng rng(seed);

    int fan_in = spec.input_dim;
    for (int h : spec.hidden_dims) {
        DenseLayer layer;
        layer.weight = Matrix(std::size_t(fan_in), std::size_t(h));
        layer.bias.assign(std::size_t(h), 0);
        // He-uniform: the layer feeds a relu.
        fill_uniform(layer.weight, real(std::sqrt(6.0 / double(fan_in))), rng);
        net.dense.push_back(std::move(layer));

        BatchNormLayer bnl;
        bnl.gamma.assign(std::size_t(h), 1);
        bnl.beta.assign(std::size_t(h), 0);
        bnl.running_mean.assign(std::size_t(h), 0);
        bnl.running_var.assign(std::size_t(h), 1);
        net.bn.push_back(std::move(bnl));

        fan_in = h;
    }

    DenseLayer head;
    head.weight = Matrix(std::size_t(fan_in), std::size_t(spec.num_classes));
    head.bias.assign(std::size_t(spec.num_classes), 0);
    fill_uniform(head.weight, real(std::sqrt(6.0 / double(fan_in + spec.num_classes))), rng);
    net.dense.push_back(std::move(head));

    return net;
}

namespace {

Matrix dense_forward(const DenseLayer& layer, const Matrix& x) {
    Matrix y = matmul(x, layer.weight);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        real* row = y.row(r);
        for (std::size_t c = 0; c < y.cols(); ++c) {
            row[c] += layer.bias[c];
        }
    }
    return y;
}

void softmax_rows(Matrix& z) {
    for (std::size_t r = 0; r < z.rows(); ++r) {
        real* row = z.row(r);
        real m = row[0];
        for (std::size_t c = 1; c < z.cols(); ++c) {
            m = std::max(m, row[c]);
        }
        real sum = 0;
        for (std::size_t c = 0; c < z.cols(); ++c) {
            row[c] = std::exp(row[c] - m);
            sum += row[c];
        }
        for (std::size_t c = 0; c < z.cols(); ++c) {
            row[c] /= sum;
        }
    }
}

void check_input(const Network& net, const Matrix& x) {
    if (x.cols() != std::size_t(net.spec.input_dim)) {
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " features, network expects " +
                                    std::to_string(net.spec.input_dim));
    }
    if (x.rows() == 0) {
        throw std::invalid_argument("forward: empty batch");
    }
}

}  // namespace

TrainForward forward_train(Network& net, const Matrix& x) {
    check_input(net, x);
    const std::size_t batch = x.rows();
    if (batch < 2) {
        throw std::invalid_argument("forward_train: batch statistics need batch size >= 2");
    }

    TrainForward out;
    out.cache.hidden.resize(net.num_hidden());

    Matrix act = x;
    for (std::size_t l = 0; l < net.num_hidden(); ++l) {
        LayerCache& cache = out.cache.hidden[l];
        cache.input = std::move(act);

        Matrix z = dense_forward(net.dense[l], cache.input);
        const std::size_t features = z.cols();
        BatchNormLayer& bnl = net.bn[l];

        Vector mean(features, 0);
        for (std::size_t r = 0; r < batch; ++r) {
            const real* row = z.row(r);
            for (std::size_t c = 0; c < features; ++c) {
                mean[c] += row[c];
            }
        }
        for (real& m : mean) {
            m /= real(batch);
        }

        Vector var(features, 0);  // biased, used for normalization
        for (std::size_t r = 0; r < batch; ++r) {
            const real* row = z.row(r);
            for (std::size_t c = 0; c < features; ++c) {
                const real d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        for (real& v : var) {
            v /= real(batch);
        }

        cache.inv_std.resize(features);
        for (std::size_t c = 0; c < features; ++c) {
            cache.inv_std[c] = real(1) / std::sqrt(var[c] + net.spec.bn_eps);
        }

        // Running stats track the unbiased variance (torch convention).
        const real mom = net.spec.bn_momentum;
        const real unbias = real(batch) / real(batch - 1);
        for (std::size_t c = 0; c < features; ++c) {
            bnl.running_mean[c] = (real(1) - mom) * bnl.running_mean[c] + mom * mean[c];
            bnl.running_var[c] = (real(1) - mom) * bnl.running_var[c] + mom * var[c] * unbias;
        }

        cache.normalized = Matrix(batch, features);
        cache.activated = Matrix(batch, features);
        for (std::size_t r = 0; r < batch; ++r) {
            const real* zrow = z.row(r);
            real* nrow = cache.normalized.row(r);
            real* arow = cache.activated.row(r);
            for (std::size_t c = 0; c < features; ++c) {
                const real xhat = (zrow[c] - mean[c]) * cache.inv_std[c];
                nrow[c] = xhat;
                const real y = bnl.gamma[c] * xhat + bnl.beta[c];
                arow[c] = y > 0 ? y : real(0);
            }
        }
        act = cache.activated;
    }

    out.cache.head_input = std::move(act);
    Matrix logits = dense_forward(net.dense.back(), out.cache.head_input);
    softmax_rows(logits);
    out.cache.probs = logits;
    out.probs = std::move(logits);
    return out;
}

Matrix forward_eval(const Network& net, const Matrix& x) {
    check_input(net, x);
    Matrix act = x;
    for (std::size_t l = 0; l < net.num_hidden(); ++l) {
        Matrix z = dense_forward(net.dense[l], act);
        const BatchNormLayer& bnl = net.bn[l];
        for (std::size_t r = 0; r < z.rows(); ++r) {
            real* row = z.row(r);
            for (std::size_t c = 0; c < z.cols(); ++c) {
                const real xhat = (row[c] - bnl.running_mean[c]) /
                                  std::sqrt(bnl.running_var[c] + net.spec.bn_eps);
                const real y = bnl.gamma[c] * xhat + bnl.beta[c];
                row[c] = y > 0 ? y : real(0);
            }
        }
        act = std::move(z);
    }
    Matrix logits = dense_forward(net.dense.back(), act);
    softmax_rows(logits);
    return logits;
}

Gradients Gradients::zeros_like(const Network& net) {
    Gradients g;
    g.dense.reserve(net.dense.size());
    for (const auto& d : net.dense) {
        g.dense.push_back({Matrix(d.weight.rows(), d.weight.cols()), Vector(d.bias.size(), 0)});
    }
    g.bn.reserve(net.bn.size());
    for (const auto& b : net.bn) {
        g.bn.push_back({Vector(b.gamma.size(), 0), Vector(b.beta.size(), 0)});
    }
    return g;
}

namespace {

void add_vec(Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("Gradients::add: shape mismatch");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
}

}  // namespace

void Gradients::add(const Gradients& other) {
    if (dense.size() != other.dense.size() || bn.size() != other.bn.size()) {
        throw std::invalid_argument("Gradients::add: layer count mismatch");
    }
    for (std::size_t l = 0; l < dense.size(); ++l) {
        if (dense[l].weight.rows() != other.dense[l].weight.rows() ||
            dense[l].weight.cols() != other.dense[l].weight.cols()) {
            throw std::invalid_argument("Gradients::add: shape mismatch");
        }
        real* a = dense[l].weight.data();
        const real* b = other.dense[l].weight.data();
        for (std::size_t i = 0; i < dense[l].weight.size(); ++i) {
            a[i] += b[i];
        }
        add_vec(dense[l].bias, other.dense[l].bias);
    }
    for (std::size_t l = 0; l < bn.size(); ++l) {
        add_vec(bn[l].gamma, other.bn[l].gamma);
        add_vec(bn[l].beta, other.bn[l].beta);
    }
}

Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& prob_grad) {
    if (cache.hidden.size() != net.num_hidden() || cache.probs.empty()) {
        throw std::invalid_argument("backward: cache does not match network");
    }
    if (prob_grad.rows() != cache.probs.rows() || prob_grad.cols() != cache.probs.cols()) {
        throw std::invalid_argument("backward: loss gradient shape mismatch");
    }
    const std::size_t batch = cache.probs.rows();
    const std::size_t classes = cache.probs.cols();

    Gradients grads = Gradients::zeros_like(net);

    // Softmax backward: dz_i = p_i * (dp_i - sum_j dp_j p_j), per row.
    Matrix dz(batch, classes);
    for (std::size_t r = 0; r < batch; ++r) {
        const real* p = cache.probs.row(r);
        const real* dp = prob_grad.row(r);
        real dot = 0;
        for (std::size_t c = 0; c < classes; ++c) {
            dot += dp[c] * p[c];
        }
        real* out = dz.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            out[c] = p[c] * (dp[c] - dot);
        }
    }

    const DenseLayer& head = net.dense.back();
    grads.dense.back().weight = matmul_at_b(cache.head_input, dz);
    grads.dense.back().bias = col_sums(dz);
    Matrix dact = matmul_a_bt(dz, head.weight);

    for (std::size_t li = net.num_hidden(); li-- > 0;) {
        const LayerCache& lc = cache.hidden[li];
        const BatchNormLayer& bnl = net.bn[li];
        const std::size_t features = lc.activated.cols();

        // relu backward: pass gradient where the activation was positive.
        Matrix dy(batch, features);
        for (std::size_t r = 0; r < batch; ++r) {
            const real* arow = lc.activated.row(r);
            const real* grow = dact.row(r);
            real* drow = dy.row(r);
            for (std::size_t c = 0; c < features; ++c) {
                drow[c] = arow[c] > 0 ? grow[c] : real(0);
            }
        }

        // Batch-norm backward with the cached batch statistics.
        Vector& dgamma = grads.bn[li].gamma;
        Vector& dbeta = grads.bn[li].beta;
        Vector sum_dxhat(features, 0);
        Vector sum_dxhat_xhat(features, 0);
        for (std::size_t r = 0; r < batch; ++r) {
            const real* dyrow = dy.row(r);
            const real* nrow = lc.normalized.row(r);
            for (std::size_t c = 0; c < features; ++c) {
                dgamma[c] += dyrow[c] * nrow[c];
                dbeta[c] += dyrow[c];
                const real dxhat = dyrow[c] * bnl.gamma[c];
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * nrow[c];
            }
        }
        Matrix dzl(batch, features);
        const real inv_batch = real(1) / real(batch);
        for (std::size_t r = 0; r < batch; ++r) {
            const real* dyrow = dy.row(r);
            const real* nrow = lc.normalized.row(r);
            real* drow = dzl.row(r);
            for (std::size_t c = 0; c < features; ++c) {
                const real dxhat = dyrow[c] * bnl.gamma[c];
                drow[c] = lc.inv_std[c] * inv_batch *
                          (real(batch) * dxhat - sum_dxhat[c] - nrow[c] * sum_dxhat_xhat[c]);
            }
        }

        grads.dense[li].weight = matmul_at_b(lc.input, dzl);
        grads.dense[li].bias = col_sums(dzl);
        if (li > 0) {
            dact = matmul_a_bt(dzl, net.dense[li].weight);
        }
    }

    return grads;
}

OptimizerState OptimizerState::create(const Network& net, const AdamConfig& config) {
    config.validate();
    OptimizerState opt;
    opt.config = config;
    opt.step = 0;
    opt.m = Gradients::zeros_like(net);
    opt.v = Gradients::zeros_like(net);
    return opt;
}

namespace {

void adam_update(real* param, const real* grad, real* m, real* v, std::size_t n,
                 const AdamConfig& cfg, real bias1, real bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (real(1) - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (real(1) - cfg.beta2) * grad[i] * grad[i];
        const real mhat = m[i] / bias1;
        const real vhat = v[i] / bias2;
        param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

}  // namespace

void adam_step(Network& net, const Gradients& grads, OptimizerState& opt) {
    if (grads.dense.size() != net.dense.size() || grads.bn.size() != net.bn.size()) {
        throw std::invalid_argument("adam_step: gradient layer count mismatch");
    }
    opt.step += 1;
    const AdamConfig& cfg = opt.config;
    const real bias1 = real(1) - real(std::pow(double(cfg.beta1), double(opt.step)));
    const real bias2 = real(1) - real(std::pow(double(cfg.beta2), double(opt.step)));

    for (std::size_t l = 0; l < net.dense.size(); ++l) {
        if (grads.dense[l].weight.size() != net.dense[l].weight.size() ||
            grads.dense[l].bias.size() != net.dense[l].bias.size()) {
            throw std::invalid_argument("adam_step: dense gradient shape mismatch");
        }
        adam_update(net.dense[l].weight.data(), grads.dense[l].weight.data(),
                    opt.m.dense[l].weight.data(), opt.v.dense[l].weight.data(),
                    net.dense[l].weight.size(), cfg, bias1, bias2);
        adam_update(net.dense[l].bias.data(), grads.dense[l].bias.data(),
                    opt.m.dense[l].bias.data(), opt.v.dense[l].bias.data(),
                    net.dense[l].bias.size(), cfg, bias1, bias2);
    }
    for (std::size_t l = 0; l < net.bn.size(); ++l) {
        if (grads.bn[l].gamma.size() != net.bn[l].gamma.size() ||
            grads.bn[l].beta.size() != net.bn[l].beta.size()) {
            throw std::invalid_argument("adam_step: batch-norm gradient shape mismatch");
        }
        adam_update(net.bn[l].gamma.data(), grads.bn[l].gamma.data(),
                    opt.m.bn[l].gamma.data(), opt.v.bn[l].gamma.data(),
                    net.bn[l].gamma.size(), cfg, bias1, bias2);
        adam_update(net.bn[l].beta.data(), grads.bn[l].beta.data(),
                    opt.m.bn[l].beta.data(), opt.v.bn[l].beta.data(),
                    net.bn[l].beta.size(), cfg, bias1, bias2);
    }
}

}  // namespace crodobo
