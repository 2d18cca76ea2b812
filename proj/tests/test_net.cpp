#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "crodobo/gradcheck.hpp"
#include "crodobo/losses.hpp"
#include "crodobo/net.hpp"

using namespace crodobo;

namespace {

NetworkSpec tiny_spec() {
    NetworkSpec spec;
    spec.input_dim = 3;
    spec.hidden_dims = {5, 4};
    spec.num_classes = 3;
    return spec;
}

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(rows, cols);
    for (real& v : x.storage()) {
        v = real(rng.normal());
    }
    return x;
}

}  // namespace

TEST_CASE("init_network is deterministic in the seed") {
    NetworkSpec spec = tiny_spec();
    Network a = init_network(spec, 7);
    Network b = init_network(spec, 7);
    CHECK(a == b);
    Network c = init_network(spec, 8);
    CHECK(a.dense[0].weight != c.dense[0].weight);
}

TEST_CASE("fresh batch-norm stats are mean 0, var 1") {
    Network net = init_network(tiny_spec(), 1);
    for (const auto& bn : net.bn) {
        for (real m : bn.running_mean) CHECK(m == 0);
        for (real v : bn.running_var) CHECK(v == 1);
        for (real g : bn.gamma) CHECK(g == 1);
        for (real b : bn.beta) CHECK(b == 0);
    }
}

TEST_CASE("parameter count matches the hand count for [128,256]") {
    NetworkSpec spec;
    spec.input_dim = 2;
    spec.hidden_dims = {128, 256};
    spec.num_classes = 2;
    Network net = init_network(spec, 3);
    const std::size_t expected = (2 * 128 + 128) + (2 * 128)      // dense0 + bn0
                                 + (128 * 256 + 256) + (2 * 256)  // dense1 + bn1
                                 + (256 * 2 + 2);                 // head
    CHECK(net.trainable_parameter_count() == expected);
}

TEST_CASE("spec validation rejects bad fields") {
    NetworkSpec spec = tiny_spec();
    spec.num_classes = 1;
    CHECK_THROWS_AS(init_network(spec, 0), std::invalid_argument);
    spec = tiny_spec();
    spec.hidden_dims = {0};
    CHECK_THROWS_AS(init_network(spec, 0), std::invalid_argument);
    spec = tiny_spec();
    spec.input_dim = 0;
    CHECK_THROWS_AS(init_network(spec, 0), std::invalid_argument);
}

TEST_CASE("forward outputs are row-stochastic") {
    Network net = init_network(tiny_spec(), 11);
    Matrix x = random_batch(9, 3, 42);
    Matrix probs = forward_eval(net, x);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        real sum = 0;
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            CHECK(probs(r, c) > 0);
            CHECK(probs(r, c) < 1);
            sum += probs(r, c);
        }
        CHECK(std::abs(sum - 1) < 1e-6);
    }
}

TEST_CASE("eval-mode forward is pure") {
    Network net = init_network(tiny_spec(), 11);
    Network before = net;
    Matrix x = random_batch(4, 3, 5);
    Matrix p1 = forward_eval(net, x);
    Matrix p2 = forward_eval(net, x);
    CHECK(p1 == p2);
    CHECK(net == before);
}

TEST_CASE("train-mode forward mutates only batch-norm running stats") {
    Network net = init_network(tiny_spec(), 11);
    Network before = net;
    Matrix x = random_batch(8, 3, 6);
    forward_train(net, x);
    for (std::size_t l = 0; l < net.dense.size(); ++l) {
        CHECK(net.dense[l].weight == before.dense[l].weight);
        CHECK(net.dense[l].bias == before.dense[l].bias);
    }
    for (std::size_t l = 0; l < net.bn.size(); ++l) {
        CHECK(net.bn[l].gamma == before.bn[l].gamma);
        CHECK(net.bn[l].beta == before.bn[l].beta);
        CHECK(net.bn[l].running_mean != before.bn[l].running_mean);
    }
}

TEST_CASE("train-mode normalization: cached activations have batch mean 0, var 1") {
    NetworkSpec spec = tiny_spec();
    // var(x_hat) = s2/(s2+eps); the deviation from 1 is eps/(s2+eps), so the
    // 1e-4 bound needs eps well below the smallest per-feature variance.
    spec.bn_eps = real(1e-8);
    Network net = init_network(spec, 13);
    Matrix x = random_batch(16, 3, 7);
    TrainForward fwd = forward_train(net, x);
    for (const LayerCache& lc : fwd.cache.hidden) {
        const std::size_t batch = lc.normalized.rows();
        for (std::size_t c = 0; c < lc.normalized.cols(); ++c) {
            real mean = 0;
            for (std::size_t r = 0; r < batch; ++r) mean += lc.normalized(r, c);
            mean /= real(batch);
            real var = 0;
            for (std::size_t r = 0; r < batch; ++r) {
                const real d = lc.normalized(r, c) - mean;
                var += d * d;
            }
            var /= real(batch);
            CHECK(std::abs(mean) < 1e-6);
            CHECK(std::abs(var - 1) < 1e-4);
        }
    }
    // Every layer at the default eps: recompute batch stats of the dense
    // output independently and reconstruct x_hat.
    net = init_network(tiny_spec(), 13);
    fwd = forward_train(net, x);
    for (std::size_t l = 0; l < net.num_hidden(); ++l) {
        const LayerCache& lc = fwd.cache.hidden[l];
        Matrix z = matmul(lc.input, net.dense[l].weight);
        const std::size_t batch = z.rows();
        for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t c = 0; c < z.cols(); ++c) {
                z(r, c) += net.dense[l].bias[c];
            }
        }
        for (std::size_t c = 0; c < z.cols(); ++c) {
            real mean = 0;
            for (std::size_t r = 0; r < batch; ++r) mean += z(r, c);
            mean /= real(batch);
            real var = 0;
            for (std::size_t r = 0; r < batch; ++r) {
                const real d = z(r, c) - mean;
                var += d * d;
            }
            var /= real(batch);
            const real inv_std = real(1) / std::sqrt(var + net.spec.bn_eps);
            for (std::size_t r = 0; r < batch; ++r) {
                const real expected = (z(r, c) - mean) * inv_std;
                CHECK(lc.normalized(r, c) == doctest::Approx(expected).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("running stats after one pass match a hand recomputation") {
    NetworkSpec spec = tiny_spec();
    Network net = init_network(spec, 17);
    Matrix x = random_batch(10, 3, 8);
    Matrix z = matmul(x, net.dense[0].weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
        for (std::size_t c = 0; c < z.cols(); ++c) {
            z(r, c) += net.dense[0].bias[c];
        }
    }
    forward_train(net, x);
    for (std::size_t c = 0; c < z.cols(); ++c) {
        real mean = 0;
        for (std::size_t r = 0; r < z.rows(); ++r) mean += z(r, c);
        mean /= real(z.rows());
        real var = 0;
        for (std::size_t r = 0; r < z.rows(); ++r) {
            const real d = z(r, c) - mean;
            var += d * d;
        }
        var /= real(z.rows());
        const real unbiased = var * real(z.rows()) / real(z.rows() - 1);
        CHECK(net.bn[0].running_mean[c] ==
              doctest::Approx(0.1 * mean).epsilon(1e-12));
        CHECK(net.bn[0].running_var[c] ==
              doctest::Approx(0.9 * 1.0 + 0.1 * unbiased).epsilon(1e-12));
    }
}

TEST_CASE("forward rejects bad inputs") {
    Network net = init_network(tiny_spec(), 1);
    Matrix wrong(4, 2, 0.0);
    CHECK_THROWS_AS(forward_eval(net, wrong), std::invalid_argument);
    Matrix single(1, 3, 0.5);
    CHECK_THROWS_AS(forward_train(net, single), std::invalid_argument);
}

TEST_CASE("backward of a zero loss gradient is zero") {
    Network net = init_network(tiny_spec(), 19);
    Matrix x = random_batch(6, 3, 9);
    TrainForward fwd = forward_train(net, x);
    Matrix zero(6, 3, 0.0);
    Gradients g = backward(net, fwd.cache, zero);
    for (const auto& d : g.dense) {
        for (real v : d.weight.storage()) CHECK(v == 0);
        for (real v : d.bias) CHECK(v == 0);
    }
    for (const auto& b : g.bn) {
        for (real v : b.gamma) CHECK(v == 0);
        for (real v : b.beta) CHECK(v == 0);
    }
}

TEST_CASE("backward rejects a mismatched cache") {
    Network net = init_network(tiny_spec(), 19);
    Matrix x = random_batch(6, 3, 9);
    TrainForward fwd = forward_train(net, x);
    NetworkSpec other = tiny_spec();
    other.hidden_dims = {5};
    Network small = init_network(other, 19);
    Matrix dp(6, 3, 0.0);
    CHECK_THROWS_AS(backward(small, fwd.cache, dp), std::invalid_argument);
    Matrix bad_shape(5, 3, 0.0);
    CHECK_THROWS_AS(backward(net, fwd.cache, bad_shape), std::invalid_argument);
}

TEST_CASE("gradients against central finite differences") {
    const real tol = sizeof(real) == 8 ? real(1e-4) : real(1e-2);
    NetworkSpec spec = tiny_spec();
    for (GradCheckLoss loss : {GradCheckLoss::source, GradCheckLoss::exchange,
                               GradCheckLoss::entropy, GradCheckLoss::diversity}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const real err = grad_check(spec, seed, loss);
            INFO("loss=" << to_string(loss) << " seed=" << seed << " err=" << err);
            CHECK(err < tol);
        }
    }
}

TEST_CASE("finite differences also cover a one-hidden-layer net") {
    NetworkSpec spec;
    spec.input_dim = 4;
    spec.hidden_dims = {6};
    spec.num_classes = 2;
    const real tol = sizeof(real) == 8 ? real(1e-4) : real(1e-2);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        CHECK(grad_check(spec, seed, GradCheckLoss::source) < tol);
    }
}

TEST_CASE("a corrupted batch-norm backward is detected") {
    GradCheckOptions options;
    options.corrupt_bn_backward = true;
    CHECK(grad_check(tiny_spec(), 3, GradCheckLoss::source, options) >= 1e-4);
}

TEST_CASE("duplicating every sample leaves mean-loss gradients unchanged") {
    NetworkSpec spec = tiny_spec();
    Network net = init_network(spec, 23);
    Matrix x = random_batch(4, 3, 10);
    std::vector<int> labels = {0, 2, 1, 1};

    Matrix x2(8, 3);
    std::vector<int> labels2(8);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            x2(r, c) = x(r, c);
            x2(r + 4, c) = x(r, c);
        }
        labels2[r] = labels[r];
        labels2[r + 4] = labels[r];
    }

    Network n1 = net;
    TrainForward f1 = forward_train(n1, x);
    LossValue l1 = cross_entropy_loss(f1.probs, labels);
    Gradients g1 = backward(n1, f1.cache, l1.prob_grad);

    Network n2 = net;
    TrainForward f2 = forward_train(n2, x2);
    LossValue l2 = cross_entropy_loss(f2.probs, labels2);
    Gradients g2 = backward(n2, f2.cache, l2.prob_grad);

    CHECK(l1.value == doctest::Approx(l2.value).epsilon(1e-12));
    for (std::size_t l = 0; l < g1.dense.size(); ++l) {
        for (std::size_t i = 0; i < g1.dense[l].weight.size(); ++i) {
            CHECK(std::abs(g1.dense[l].weight.data()[i] - g2.dense[l].weight.data()[i]) < 1e-8);
        }
        for (std::size_t i = 0; i < g1.dense[l].bias.size(); ++i) {
            CHECK(std::abs(g1.dense[l].bias[i] - g2.dense[l].bias[i]) < 1e-8);
        }
    }
}

TEST_CASE("adam with zero gradients only advances the step counter") {
    Network net = init_network(tiny_spec(), 29);
    Network before = net;
    OptimizerState opt = OptimizerState::create(net, {});
    Gradients zeros = Gradients::zeros_like(net);
    adam_step(net, zeros, opt);
    CHECK(net == before);
    CHECK(opt.step == 1);
    for (const auto& d : opt.m.dense) {
        for (real v : d.weight.storage()) CHECK(v == 0);
    }
}

TEST_CASE("adam first step matches the hand-evaluated formula") {
    // One coordinate with gradient 1: after bias correction mhat = 1,
    // vhat = 1, so the update is exactly lr / (1 + eps).
    Network net = init_network(tiny_spec(), 31);
    const real w0 = net.dense[0].weight(0, 0);
    AdamConfig cfg;
    OptimizerState opt = OptimizerState::create(net, cfg);
    Gradients g = Gradients::zeros_like(net);
    g.dense[0].weight(0, 0) = 1;
    adam_step(net, g, opt);
    const real expected = w0 - cfg.learning_rate * real(1) / (real(1) + cfg.epsilon);
    CHECK(net.dense[0].weight(0, 0) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(opt.step == 1);
}

TEST_CASE("adam is deterministic on clones") {
    Network a = init_network(tiny_spec(), 37);
    Network b = a;
    OptimizerState oa = OptimizerState::create(a, {});
    OptimizerState ob = OptimizerState::create(b, {});
    Matrix x = random_batch(6, 3, 11);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2};
    for (int it = 0; it < 2; ++it) {
        TrainForward fa = forward_train(a, x);
        Gradients ga = backward(a, fa.cache, cross_entropy_loss(fa.probs, labels).prob_grad);
        adam_step(a, ga, oa);
        TrainForward fb = forward_train(b, x);
        Gradients gb = backward(b, fb.cache, cross_entropy_loss(fb.probs, labels).prob_grad);
        adam_step(b, gb, ob);
    }
    CHECK(a == b);
}

TEST_CASE("learners trained on disjoint batches grow different running stats") {
    Network u = init_network(tiny_spec(), 41);
    Network v = u;
    Rng rng(99);
    for (int it = 0; it < 10; ++it) {
        Matrix xu(6, 3);
        Matrix xv(6, 3);
        for (real& val : xu.storage()) val = real(rng.normal());
        for (real& val : xv.storage()) val = real(rng.normal(0.5, 1.2));
        forward_train(u, xu);
        forward_train(v, xv);
    }
    real diff = 0;
    for (std::size_t c = 0; c < u.bn[0].running_mean.size(); ++c) {
        const real d = u.bn[0].running_mean[c] - v.bn[0].running_mean[c];
        diff += d * d;
    }
    CHECK(std::sqrt(diff) > 0);
}
