#pragma once

#include <vector>

#include "crodobo/matrix.hpp"
#include "crodobo/rng.hpp"

namespace crodobo {

enum class AugmentOp {
    gaussian_noise,   // add N(0, (m * scale)^2) per element
    feature_dropout,  // zero each feature independently with rate m/2
    global_scale,     // multiply the sample by U[1 - m/2, 1 + m/2]
    additive_shift,   // add one U[-m/2, m/2] * scale constant to the sample
    feature_cutout,   // zero a contiguous block of floor(m/2 * d) features
};

const char* to_string(AugmentOp op);
AugmentOp augment_op_from_string(const std::string& name);

// Identity by default; optionally a small gaussian jitter relative to the
// batch feature scale.
struct WeakPolicy {
    bool jitter = false;
    real sigma_rel = real(0.01);
    bool operator==(const WeakPolicy&) const = default;
};

// Vector-space analogue of a two-hyperparameter random augmentation policy:
// each sample gets `num_ops` ops drawn uniformly from the pool, composed at
// magnitude m in [0, 1]. m = 0 is the identity for every op.
struct AugmentPolicy {
    std::vector<AugmentOp> ops{AugmentOp::gaussian_noise, AugmentOp::feature_dropout,
                               AugmentOp::global_scale, AugmentOp::additive_shift,
                               AugmentOp::feature_cutout};
    int num_ops = 2;
    real magnitude = real(0.5);

    void validate() const;
    bool operator==(const AugmentPolicy&) const = default;
};

// Pooled standard deviation of the batch around per-feature means; the unit
// for noise- and shift-type ops.
real batch_feature_scale(const Matrix& x);

Matrix weak_augment(const Matrix& x, const WeakPolicy& policy, Rng& rng);
Matrix strong_augment(const Matrix& x, const AugmentPolicy& policy, Rng& rng);

}  // namespace crodobo
