#include "crodobo/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crodobo {

namespace {

void check_labels(const Matrix& probs, const std::vector<int>& labels) {
    if (labels.size() != probs.rows()) {
        throw std::invalid_argument("labels count does not match batch size");
    }
    for (int y : labels) {
        if (y < 0 || std::size_t(y) >= probs.cols()) {
            throw std::invalid_argument("label " + std::to_string(y) + " out of range [0, " +
                                        std::to_string(probs.cols()) + ")");
        }
    }
}

}  // namespace

LossValue cross_entropy_loss(const Matrix& probs, const std::vector<int>& labels) {
    check_labels(probs, labels);
    const std::size_t batch = probs.rows();
    LossValue out;
    out.prob_grad = Matrix(batch, probs.cols());
    real total = 0;
    const real inv_batch = real(1) / real(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const real p = probs(r, std::size_t(labels[r]));
        total -= std::log(p);
        out.prob_grad(r, std::size_t(labels[r])) = -inv_batch / p;
    }
    out.value = total * inv_batch;
    return out;
}

PseudoLabels pseudo_labels(const Matrix& probs, real tau) {
    if (!(tau > 0 && tau <= 1)) {
        throw std::invalid_argument("tau must be in (0, 1], got " + std::to_string(double(tau)));
    }
    PseudoLabels out;
    out.labels.resize(probs.rows());
    out.mask.resize(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const real* row = probs.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c) {
            if (row[c] > row[best]) {
                best = c;
            }
        }
        out.labels[r] = int(best);
        out.mask[r] = row[best] >= tau;
        if (out.mask[r]) {
            ++out.accepted;
        }
    }
    return out;
}

LossValue masked_cross_entropy(const Matrix& probs, const std::vector<int>& labels,
                               const std::vector<bool>& mask) {
    check_labels(probs, labels);
    if (mask.size() != probs.rows()) {
        throw std::invalid_argument("mask size does not match batch size");
    }
    const std::size_t batch = probs.rows();
    LossValue out;
    out.prob_grad = Matrix(batch, probs.cols());
    real total = 0;
    const real inv_batch = real(1) / real(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        if (!mask[r]) {
            continue;
        }
        const real p = probs(r, std::size_t(labels[r]));
        total -= std::log(p);
        out.prob_grad(r, std::size_t(labels[r])) = -inv_batch / p;
    }
    out.value = total * inv_batch;
    return out;
}

LossValue entropy_loss(const Matrix& probs) {
    const std::size_t batch = probs.rows();
    if (batch == 0) {
        throw std::invalid_argument("entropy_loss: empty batch");
    }
    LossValue out;
    out.prob_grad = Matrix(batch, probs.cols());
    real total = 0;
    const real inv_batch = real(1) / real(batch);
    for (std::size_t r = 0; r < batch; ++r) {
        const real* p = probs.row(r);
        real* g = out.prob_grad.row(r);
        for (std::size_t c = 0; c < probs.cols(); ++c) {
            if (p[c] > 0) {
                const real logp = std::log(p[c]);
                total -= p[c] * logp;
                g[c] = -(logp + real(1)) * inv_batch;
            }
        }
    }
    out.value = total * inv_batch;
    return out;
}

LossValue diversity_loss(const Matrix& probs) {
    const std::size_t batch = probs.rows();
    if (batch == 0) {
        throw std::invalid_argument("diversity_loss: empty batch");
    }
    const std::size_t classes = probs.cols();
    Vector marginal(classes, 0);
    for (std::size_t r = 0; r < batch; ++r) {
        const real* p = probs.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            marginal[c] += p[c];
        }
    }
    const real inv_batch = real(1) / real(batch);
    for (real& m : marginal) {
        m *= inv_batch;
    }

    LossValue out;
    out.prob_grad = Matrix(batch, classes);
    real total = 0;
    Vector dmarginal(classes, 0);
    for (std::size_t c = 0; c < classes; ++c) {
        if (marginal[c] > 0) {
            const real logm = std::log(marginal[c]);
            total += marginal[c] * logm;
            dmarginal[c] = (logm + real(1)) * inv_batch;
        }
    }
    for (std::size_t r = 0; r < batch; ++r) {
        real* g = out.prob_grad.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            g[c] = dmarginal[c];
        }
    }
    out.value = total;
    return out;
}

}  // namespace crodobo
