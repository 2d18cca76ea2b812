#include "crodobo/augment.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crodobo {

const char* to_string(AugmentOp op) {
    switch (op) {
        case AugmentOp::gaussian_noise: return "gaussian_noise";
        case AugmentOp::feature_dropout: return "feature_dropout";
        case AugmentOp::global_scale: return "global_scale";
        case AugmentOp::additive_shift: return "additive_shift";
        case AugmentOp::feature_cutout: return "feature_cutout";
    }
    return "?";
}

AugmentOp augment_op_from_string(const std::string& name) {
    if (name == "gaussian_noise") return AugmentOp::gaussian_noise;
    if (name == "feature_dropout") return AugmentOp::feature_dropout;
    if (name == "global_scale") return AugmentOp::global_scale;
    if (name == "additive_shift") return AugmentOp::additive_shift;
    if (name == "feature_cutout") return AugmentOp::feature_cutout;
    throw std::invalid_argument("unknown augment op '" + name + "'");
}

void AugmentPolicy::validate() const {
    if (ops.empty()) {
        throw std::invalid_argument("AugmentPolicy.ops: must name at least one op");
    }
    if (num_ops < 1) {
        throw std::invalid_argument("AugmentPolicy.num_ops: must be >= 1");
    }
    if (!(magnitude >= 0 && magnitude <= 1)) {
        throw std::invalid_argument("AugmentPolicy.magnitude: must be in [0, 1]");
    }
}

real batch_feature_scale(const Matrix& x) {
    if (x.rows() == 0 || x.cols() == 0) {
        return 0;
    }
    Vector mean(x.cols(), 0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const real* row = x.row(r);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            mean[c] += row[c];
        }
    }
    for (real& m : mean) {
        m /= real(x.rows());
    }
    real ss = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const real* row = x.row(r);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const real d = row[c] - mean[c];
            ss += d * d;
        }
    }
    return std::sqrt(ss / real(x.rows() * x.cols()));
}

Matrix weak_augment(const Matrix& x, const WeakPolicy& policy, Rng& rng) {
    if (!policy.jitter || policy.sigma_rel == 0) {
        return x;
    }
    const real sigma = policy.sigma_rel * batch_feature_scale(x);
    Matrix out = x;
    if (sigma == 0) {
        return out;
    }
    for (real& v : out.storage()) {
        v += real(rng.normal(0.0, double(sigma)));
    }
    return out;
}

namespace {

void apply_op(AugmentOp op, real* row, std::size_t dim, real m, real scale, Rng& rng) {
    switch (op) {
        case AugmentOp::gaussian_noise: {
            const real sigma = m * scale;
            for (std::size_t c = 0; c < dim; ++c) {
                const real noise = real(rng.normal()) * sigma;
                row[c] += noise;
            }
            break;
        }
        case AugmentOp::feature_dropout: {
            const real rate = m / 2;
            for (std::size_t c = 0; c < dim; ++c) {
                if (rng.uniform() < double(rate)) {
                    row[c] = 0;
                }
            }
            break;
        }
        case AugmentOp::global_scale: {
            const real s = real(rng.uniform(1.0 - double(m) / 2, 1.0 + double(m) / 2));
            for (std::size_t c = 0; c < dim; ++c) {
                row[c] *= s;
            }
            break;
        }
        case AugmentOp::additive_shift: {
            const real delta = real(rng.uniform(-double(m) / 2, double(m) / 2)) * scale;
            for (std::size_t c = 0; c < dim; ++c) {
                row[c] += delta;
            }
            break;
        }
        case AugmentOp::feature_cutout: {
            const std::size_t len = std::size_t(std::floor(double(m) / 2 * double(dim)));
            const std::size_t start = rng.index(dim);
            for (std::size_t i = 0; i < len; ++i) {
                row[(start + i) % dim] = 0;
            }
            break;
        }
    }
}

}  // namespace

Matrix strong_augment(const Matrix& x, const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    Matrix out = x;
    if (out.empty()) {
        return out;
    }
    const real scale = batch_feature_scale(x);
    const real m = policy.magnitude;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (int k = 0; k < policy.num_ops; ++k) {
            const AugmentOp op = policy.ops[rng.index(policy.ops.size())];
            if (m == 0) {
                continue;  // magnitude-0 identity; op choice still consumes the stream
            }
            apply_op(op, out.row(r), out.cols(), m, scale, rng);
        }
    }
    return out;
}

}  // namespace crodobo
