#pragma once

#include <cstdint>
#include <vector>

#include "crodobo/matrix.hpp"
#include "crodobo/rng.hpp"

namespace crodobo {

// Architecture: input -> [dense -> batch-norm -> relu]* -> dense -> softmax.
struct NetworkSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims{128, 256};
    int num_classes = 0;
    real bn_eps = real(1e-5);
    real bn_momentum = real(0.1);

    void validate() const;  // throws std::invalid_argument on a bad field
    bool operator==(const NetworkSpec&) const = default;
};

struct DenseLayer {
    Matrix weight;  // in x out; y = x * weight + bias
    Vector bias;
    bool operator==(const DenseLayer&) const = default;
};

struct BatchNormLayer {
    Vector gamma;
    Vector beta;
    Vector running_mean;
    Vector running_var;  // strictly positive
    bool operator==(const BatchNormLayer&) const = default;
};

struct Network {
    NetworkSpec spec;
    std::vector<DenseLayer> dense;   // hidden layers, then the classifier head
    std::vector<BatchNormLayer> bn;  // one per hidden layer

    std::size_t num_hidden() const { return bn.size(); }
    std::size_t trainable_parameter_count() const;
    bool operator==(const Network&) const = default;
};

// He-uniform into relu stacks, Xavier-uniform for the head; gamma=1, beta=0,
// running mean 0, running var 1. Deterministic in the seed.
Network init_network(const NetworkSpec& spec, std::uint64_t seed);

struct LayerCache {
    Matrix input;       // what went into the dense layer
    Matrix normalized;  // x_hat, after batch-stat normalization
    Vector inv_std;     // 1/sqrt(batch_var + eps), per feature
    Matrix activated;   // relu output
};

// Only train-mode forwards produce a cache; eval mode allocates none.
struct ForwardCache {
    std::vector<LayerCache> hidden;
    Matrix head_input;
    Matrix probs;
    std::size_t batch_size() const { return probs.rows(); }
};

struct TrainForward {
    Matrix probs;
    ForwardCache cache;
};

// Train-mode forward: normalizes with batch statistics, advances the BN
// running stats by momentum. Requires batch size >= 2.
TrainForward forward_train(Network& net, const Matrix& x);

// Eval-mode forward: uses running statistics; pure.
Matrix forward_eval(const Network& net, const Matrix& x);

struct DenseGrads {
    Matrix weight;
    Vector bias;
};

struct BatchNormGrads {
    Vector gamma;
    Vector beta;
};

struct Gradients {
    std::vector<DenseGrads> dense;
    std::vector<BatchNormGrads> bn;

    static Gradients zeros_like(const Network& net);
    void add(const Gradients& other);  // element-wise +=; shapes must agree
};

// prob_grad is dLoss/dprobs for the cached forward. Backprop runs through the
// softmax, the head, and each relu/batch-norm/dense stack using the batch
// statistics captured in the cache.
Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& prob_grad);

struct AdamConfig {
    real learning_rate = real(8e-4);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real epsilon = real(1e-8);

    void validate() const;
    bool operator==(const AdamConfig&) const = default;
};

struct OptimizerState {
    AdamConfig config;
    std::int64_t step = 0;
    Gradients m;  // first moments, same shapes as the network parameters
    Gradients v;  // second moments

    static OptimizerState create(const Network& net, const AdamConfig& config);
};

// One bias-corrected Adam update over every trainable parameter
// (weights, biases, gamma, beta). Running stats are not touched.
void adam_step(Network& net, const Gradients& grads, OptimizerState& opt);

}  // namespace crodobo
